#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "subtune/executor.hpp"
#include "subtune/synth.hpp"

using namespace subtune;

namespace {

const char* stub_path() { return STUB_TRAINER_PATH; }

struct Fixture {
  Dataset dataset;
  DataContext context;

  explicit Fixture(std::size_t n_rows = 120, Task task = Task::kRegression) {
    SynthSpec spec;
    spec.task = task;
    spec.n_rows = n_rows;
    spec.n_features = 4;
    spec.noise = 0.1;
    spec.seed = 21;
    dataset = make_synthetic(spec);
    context.dataset = &dataset;
    context.split_seed = 31;
    context.subsample_seed = 37;
    SplitSpec ss;
    ss.seed = context.split_seed;
    context.split = split(dataset, ss);
    context.task = task;
    context.metric = default_metric_for(task);
  }
};

TrialSpec spec_with_seed(std::uint64_t trial_seed, double fraction = 1.0) {
  TrialSpec spec;
  spec.config = sample_config(default_xgboost_space(), trial_seed);
  spec.config.values["num_round"] = 8;  // keep unit tests quick
  spec.fraction = fraction;
  spec.trial_seed = trial_seed;
  return spec;
}

std::filesystem::path temp_log(const std::string& name) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove(path);
  return path;
}

}  // namespace

TEST_CASE("builtin trial happy path persists a completed record") {
  Fixture fx;
  const auto log_path = temp_log("subtune_exec_happy.jsonl");
  TrialLog log(log_path);
  Executor executor(fx.context, TrainerBinding{}, &log);

  const auto rec = executor.run_trial(spec_with_seed(1));
  CHECK(rec.completed());
  REQUIRE(rec.score.has_value());
  CHECK(rec.score->kind == MetricKind::kR2);
  CHECK(rec.train_seconds > 0.0);
  CHECK(rec.total_seconds >= rec.train_seconds);
  CHECK(rec.id == 0);
  CHECK(!rec.timestamp.empty());

  const auto loaded = TrialLog::load(log_path);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].config == rec.config);
  CHECK(loaded[0].score->value == rec.score->value);
  CHECK(loaded[0].split_seed == fx.context.split_seed);
}

TEST_CASE("identical inputs give identical scores with distinct ids") {
  Fixture fx;
  Executor executor(fx.context, TrainerBinding{}, nullptr);
  const auto a = executor.run_trial(spec_with_seed(5, 0.5));
  const auto b = executor.run_trial(spec_with_seed(5, 0.5));
  CHECK(a.score->value == b.score->value);
  CHECK(a.id != b.id);
}

TEST_CASE("invalid configuration fails the trial but persists the record") {
  Fixture fx;
  const auto log_path = temp_log("subtune_exec_fail.jsonl");
  TrialLog log(log_path);
  Executor executor(fx.context, TrainerBinding{}, &log);

  TrialSpec bad = spec_with_seed(2);
  bad.config.values.erase("eta");
  const auto rec = executor.run_trial(bad);
  CHECK_FALSE(rec.completed());
  CHECK(rec.failure_reason.find("invalid config") != std::string::npos);

  const auto loaded = TrialLog::load(log_path);
  REQUIRE(loaded.size() == 1);
  CHECK_FALSE(loaded[0].completed());
  CHECK(loaded[0].failure_reason == rec.failure_reason);
}

TEST_CASE("run_rung preserves submission order, also in parallel") {
  Fixture fx;
  Executor sequential(fx.context, TrainerBinding{}, nullptr, 1);
  Executor parallel(fx.context, TrainerBinding{}, nullptr, 4);

  std::vector<TrialSpec> specs;
  for (std::uint64_t i = 0; i < 8; ++i) specs.push_back(spec_with_seed(100 + i, 0.5));

  const auto seq = sequential.run_rung(specs);
  const auto par = parallel.run_rung(specs);
  REQUIRE(seq.size() == 8);
  REQUIRE(par.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(seq[i].id == static_cast<std::int64_t>(i));
    CHECK(par[i].id == static_cast<std::int64_t>(i));
    CHECK(seq[i].score->value == par[i].score->value);
    CHECK(par[i].config == specs[i].config);
  }
}

TEST_CASE("replay skips completed work and resumes where the log ends") {
  Fixture fx;
  const auto log_path = temp_log("subtune_exec_replay.jsonl");
  std::vector<TrialSpec> specs;
  for (std::uint64_t i = 0; i < 4; ++i) specs.push_back(spec_with_seed(200 + i, 0.25));

  std::vector<TrialRecord> first_two;
  {
    TrialLog log(log_path);
    Executor executor(fx.context, TrainerBinding{}, &log);
    first_two = executor.run_rung({specs[0], specs[1]});
  }

  TrialLog log(log_path);
  Executor resumed(fx.context, TrainerBinding{}, &log);
  resumed.set_replay(TrialLog::load(log_path));
  CHECK(resumed.replay_remaining() == 2);

  const auto all = resumed.run_rung(specs);
  REQUIRE(all.size() == 4);
  // Replayed records keep their ids and timestamps; fresh ones continue.
  CHECK(all[0].id == first_two[0].id);
  CHECK(all[0].timestamp == first_two[0].timestamp);
  CHECK(all[0].score->value == first_two[0].score->value);
  CHECK(all[2].id == 2);
  CHECK(all[3].id == 3);
  CHECK(resumed.replay_remaining() == 0);

  const auto final_log = TrialLog::load(log_path);
  CHECK(final_log.size() == 4);

  // Scores replay bit-for-bit against a fresh execution.
  Executor fresh(fx.context, TrainerBinding{}, nullptr);
  const auto re = fresh.run_rung(specs);
  for (std::size_t i = 0; i < 4; ++i) CHECK(re[i].score->value == all[i].score->value);
}

TEST_CASE("replay divergence falls back to fresh execution") {
  Fixture fx;
  Executor executor(fx.context, TrainerBinding{}, nullptr);
  auto replayed = executor.run_trial(spec_with_seed(300, 0.5));
  Executor resumed(fx.context, TrainerBinding{}, nullptr);
  resumed.set_replay({replayed});
  const auto different = resumed.run_trial(spec_with_seed(301, 0.5));
  CHECK(different.config == spec_with_seed(301, 0.5).config);
  CHECK(resumed.replay_remaining() == 0);
}

TEST_CASE("retrain_at_full annotates the source fidelity") {
  Fixture fx;
  Executor executor(fx.context, TrainerBinding{}, nullptr);
  const auto rec = executor.retrain_at_full(spec_with_seed(7).config, 7, 0.01);
  CHECK(rec.fraction == 1.0);
  REQUIRE(rec.annotations.source_fidelity.has_value());
  CHECK(*rec.annotations.source_fidelity == 0.01);
}

TEST_CASE("trial log tolerates a torn final line but not corrupt middles") {
  Fixture fx;
  const auto log_path = temp_log("subtune_exec_torn.jsonl");
  {
    TrialLog log(log_path);
    Executor executor(fx.context, TrainerBinding{}, &log);
    executor.run_rung({spec_with_seed(400, 0.5), spec_with_seed(401, 0.5)});
  }
  {
    std::ofstream out(log_path, std::ios::app);
    out << R"({"id": 99, "config")";  // simulated crash mid-append
  }
  const auto records = TrialLog::load(log_path);
  CHECK(records.size() == 2);

  const auto corrupt = temp_log("subtune_exec_corrupt.jsonl");
  {
    std::ofstream out(corrupt);
    out << "not json at all\n";
    out << records[0].to_json().dump() << "\n";
  }
  CHECK_THROWS_AS(TrialLog::load(corrupt), std::runtime_error);
}

TEST_CASE("record JSON round-trips annotations and failure state") {
  TrialRecord rec;
  rec.id = 12;
  rec.config.values = {{"eta", 0.25}};
  rec.fraction = 0.1;
  rec.split_seed = 1;
  rec.subsample_seed = 2;
  rec.trial_seed = 3;
  rec.status = TrialStatus::kFailed;
  rec.failure_reason = "timeout";
  rec.train_seconds = 0.5;
  rec.total_seconds = 0.9;
  rec.annotations.bracket = 4;
  rec.annotations.rung = 1;
  rec.annotations.proposal_source = "model";
  rec.annotations.source_fidelity = 0.25;
  rec.annotations.config_ordinal = 17;
  rec.timestamp = "2000-01-01T00:00:00Z";

  const auto back = TrialRecord::from_json(rec.to_json());
  CHECK(back.id == rec.id);
  CHECK(back.config == rec.config);
  CHECK_FALSE(back.completed());
  CHECK(back.failure_reason == "timeout");
  CHECK(*back.annotations.bracket == 4);
  CHECK(*back.annotations.rung == 1);
  CHECK(back.annotations.proposal_source == "model");
  CHECK(*back.annotations.source_fidelity == 0.25);
  CHECK(back.annotations.config_ordinal == 17);
  CHECK(back.timestamp == rec.timestamp);
}

TEST_CASE("external trainer roundtrip with a conforming stub") {
  const nlohmann::json request{{"config", {{"eta", 0.1}}},
                               {"rows_path", "/dev/null"},
                               {"valid_path", "/dev/null"},
                               {"task", "regression"},
                               {"metric", "r2"}};
  const auto response =
      external_trainer_roundtrip(std::string(stub_path()) + " ok", request, 10.0);
  CHECK(response.at("score").is_number());
  CHECK(response.at("train_seconds").get<double>() > 0.0);
}

TEST_CASE("external trainer protocol failures are classified") {
  const nlohmann::json request{{"config", {{"eta", 0.1}}}};

  try {
    external_trainer_roundtrip(std::string(stub_path()) + " malformed", request, 10.0);
    FAIL("expected malformed-response error");
  } catch (const ExternalTrainerError& e) {
    CHECK(std::string(e.what()).find("missing field 'score'") != std::string::npos);
  }

  try {
    external_trainer_roundtrip(std::string(stub_path()) + " badexit", request, 10.0);
    FAIL("expected exit-status error");
  } catch (const ExternalTrainerError& e) {
    CHECK(std::string(e.what()).find("exit status 3") != std::string::npos);
  }

  try {
    external_trainer_roundtrip(std::string(stub_path()) + " error", request, 10.0);
    FAIL("expected trainer error");
  } catch (const ExternalTrainerError& e) {
    CHECK(std::string(e.what()).find("stub declined") != std::string::npos);
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    external_trainer_roundtrip(std::string(stub_path()) + " hang", request, 0.5);
    FAIL("expected timeout");
  } catch (const ExternalTrainerError& e) {
    CHECK(std::string(e.what()).find("timeout") != std::string::npos);
  }
  const double waited = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(waited < 5.0);  // the child was killed, not waited out

  // The kill reaches the trainer itself, not just its shell wrapper.
  bool stub_running = false;
  for (const auto& entry : std::filesystem::directory_iterator("/proc")) {
    if (!entry.is_directory()) continue;
    std::ifstream cmdline(entry.path() / "cmdline");
    std::string contents((std::istreambuf_iterator<char>(cmdline)),
                         std::istreambuf_iterator<char>());
    std::replace(contents.begin(), contents.end(), '\0', ' ');
    if (contents.find("stub_trainer hang") != std::string::npos) stub_running = true;
  }
  CHECK_FALSE(stub_running);
}

TEST_CASE("external binding produces failed records without aborting the run") {
  Fixture fx(60);
  TrainerBinding binding;
  binding.kind = TrainerBinding::Kind::kExternal;
  binding.command = std::string(stub_path()) + " malformed";
  binding.timeout_seconds = 10.0;
  Executor executor(fx.context, binding, nullptr);

  const auto bad = executor.run_trial(spec_with_seed(500, 0.5));
  CHECK_FALSE(bad.completed());
  CHECK(bad.failure_reason.find("missing field 'score'") != std::string::npos);

  // The executor keeps going and a conforming binding still works.
  TrainerBinding ok = binding;
  ok.command = std::string(stub_path()) + " ok";
  Executor good(fx.context, ok, nullptr);
  const auto rec = good.run_trial(spec_with_seed(501, 0.5));
  CHECK(rec.completed());
  CHECK(rec.train_seconds > 0.0);
}

TEST_CASE("incumbent picks the best completed score, earliest on ties") {
  std::vector<TrialRecord> records(3);
  records[0].id = 0;
  records[0].status = TrialStatus::kCompleted;
  records[0].score = EvaluationScore{0.9, MetricKind::kR2, 1};
  records[1].id = 1;
  records[1].status = TrialStatus::kFailed;
  records[2].id = 2;
  records[2].status = TrialStatus::kCompleted;
  records[2].score = EvaluationScore{0.9, MetricKind::kR2, 1};

  const auto best = incumbent(records);
  REQUIRE(best.has_value());
  CHECK(best->id == 0);
  CHECK(incumbent({}).has_value() == false);
}

TEST_CASE("trainer binding validation") {
  TrainerBinding builtin;
  CHECK_NOTHROW(builtin.validate(Task::kRegression, MetricKind::kR2));
  CHECK_THROWS_AS(builtin.validate(Task::kBinary, MetricKind::kR2), std::invalid_argument);
  TrainerBinding external;
  external.kind = TrainerBinding::Kind::kExternal;
  CHECK_THROWS_AS(external.validate(Task::kRegression, MetricKind::kR2), std::invalid_argument);
}
