#include "subtune/executor.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "subtune/log.hpp"
#include "subtune/rng.hpp"

namespace subtune {

namespace {

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

nlohmann::json TrialRecord::to_json() const {
  nlohmann::json j{{"id", id},
                   {"config", config.to_json()},
                   {"fraction", fraction},
                   {"split_seed", split_seed},
                   {"subsample_seed", subsample_seed},
                   {"trial_seed", trial_seed},
                   {"train_seconds", train_seconds},
                   {"total_seconds", total_seconds},
                   {"status", status == TrialStatus::kCompleted ? "completed" : "failed"},
                   {"timestamp", timestamp}};
  if (score)
    j["score"] = {{"value", score->value},
                  {"metric", to_string(score->kind)},
                  {"n", score->n_evaluated}};
  if (status == TrialStatus::kFailed) j["failure_reason"] = failure_reason;
  nlohmann::json ann = nlohmann::json::object();
  if (annotations.bracket) ann["bracket"] = *annotations.bracket;
  if (annotations.rung) ann["rung"] = *annotations.rung;
  if (!annotations.proposal_source.empty()) ann["proposal_source"] = annotations.proposal_source;
  if (annotations.source_fidelity) ann["source_fidelity"] = *annotations.source_fidelity;
  if (annotations.config_ordinal >= 0) ann["config_ordinal"] = annotations.config_ordinal;
  if (!ann.empty()) j["annotations"] = std::move(ann);
  return j;
}

TrialRecord TrialRecord::from_json(const nlohmann::json& j) {
  TrialRecord r;
  r.id = j.at("id").get<std::int64_t>();
  r.config = Configuration::from_json(j.at("config"));
  r.fraction = j.at("fraction").get<double>();
  r.split_seed = j.at("split_seed").get<std::uint64_t>();
  r.subsample_seed = j.at("subsample_seed").get<std::uint64_t>();
  r.trial_seed = j.at("trial_seed").get<std::uint64_t>();
  r.train_seconds = j.at("train_seconds").get<double>();
  r.total_seconds = j.at("total_seconds").get<double>();
  r.status = j.at("status").get<std::string>() == "completed" ? TrialStatus::kCompleted
                                                              : TrialStatus::kFailed;
  if (j.contains("score")) {
    EvaluationScore s;
    s.value = j["score"].at("value").get<double>();
    s.kind = metric_from_string(j["score"].at("metric").get<std::string>());
    s.n_evaluated = j["score"].at("n").get<std::size_t>();
    r.score = s;
  }
  if (j.contains("failure_reason")) r.failure_reason = j["failure_reason"].get<std::string>();
  if (j.contains("annotations")) {
    const auto& ann = j["annotations"];
    if (ann.contains("bracket")) r.annotations.bracket = ann["bracket"].get<int>();
    if (ann.contains("rung")) r.annotations.rung = ann["rung"].get<int>();
    if (ann.contains("proposal_source"))
      r.annotations.proposal_source = ann["proposal_source"].get<std::string>();
    if (ann.contains("source_fidelity"))
      r.annotations.source_fidelity = ann["source_fidelity"].get<double>();
    if (ann.contains("config_ordinal"))
      r.annotations.config_ordinal = ann["config_ordinal"].get<std::int64_t>();
  }
  if (j.contains("timestamp")) r.timestamp = j["timestamp"].get<std::string>();
  return r;
}

TrialLog::TrialLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void TrialLog::append(const TrialRecord& record) {
  std::lock_guard<std::mutex> lock(mutex_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot open trial log for append: " + path_.string());
  out << record.to_json().dump() << "\n";
  out.flush();
  if (!out) throw std::runtime_error("failed to append to trial log: " + path_.string());
}

std::vector<TrialRecord> TrialLog::load(const std::filesystem::path& path) {
  std::vector<TrialRecord> records;
  std::ifstream in(path);
  if (!in) return records;
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      records.push_back(TrialRecord::from_json(nlohmann::json::parse(lines[i])));
    } catch (const std::exception& e) {
      if (i + 1 == lines.size()) {
        // A torn final line is what a crash mid-append leaves behind.
        logging::warn("ignoring torn final line in trial log " + path.string());
        break;
      }
      throw std::runtime_error("corrupt trial log " + path.string() + " at line " +
                               std::to_string(i + 1) + ": " + e.what());
    }
  }
  return records;
}

void TrainerBinding::validate(Task task, MetricKind metric) const {
  if (!metric_compatible(metric, task))
    throw std::invalid_argument("metric " + to_string(metric) + " incompatible with task " +
                                to_string(task));
  if (kind == Kind::kExternal && command.empty())
    throw std::invalid_argument("external trainer binding requires a command");
}

// ---------------------------------------------------------------------------
// External trainer protocol: one line-delimited JSON request on stdin, one
// response line on stdout, one process per trial.

namespace {

void ignore_sigpipe_once() {
  static std::once_flag flag;
  std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

struct ChildProcess {
  pid_t pid = -1;
  int stdin_fd = -1;
  int stdout_fd = -1;
};

ChildProcess spawn_shell(const std::string& command) {
  int to_child[2], from_child[2];
  if (pipe(to_child) != 0 || pipe(from_child) != 0)
    throw ExternalTrainerError("pipe() failed: " + std::string(std::strerror(errno)));
  const pid_t pid = fork();
  if (pid < 0) throw ExternalTrainerError("fork() failed: " + std::string(std::strerror(errno)));
  if (pid == 0) {
    setpgid(0, 0);  // own process group, so a timeout kill reaps sh and trainer alike
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  setpgid(pid, pid);  // parent side too, in case the kill races the exec
  close(to_child[0]);
  close(from_child[1]);
  return {pid, to_child[1], from_child[0]};
}

void kill_child(pid_t pid) {
  kill(-pid, SIGKILL);  // the whole group; fall back to the direct pid
  kill(pid, SIGKILL);
}

int wait_with_deadline(pid_t pid, std::chrono::steady_clock::time_point deadline, bool has_deadline) {
  for (;;) {
    int status = 0;
    const pid_t r = waitpid(pid, &status, has_deadline ? WNOHANG : 0);
    if (r == pid) return status;
    if (r < 0) throw ExternalTrainerError("waitpid failed: " + std::string(std::strerror(errno)));
    if (has_deadline && std::chrono::steady_clock::now() >= deadline) {
      kill_child(pid);
      waitpid(pid, &status, 0);
      throw ExternalTrainerError("timeout: trainer did not exit in time");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
}

}  // namespace

nlohmann::json external_trainer_roundtrip(const std::string& command,
                                          const nlohmann::json& request,
                                          double timeout_seconds) {
  ignore_sigpipe_once();
  ChildProcess child = spawn_shell(command);

  const bool has_deadline = timeout_seconds > 0.0;
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                            std::chrono::duration<double>(has_deadline ? timeout_seconds : 0.0));

  std::string payload = request.dump();
  payload += '\n';
  std::size_t written = 0;
  while (written < payload.size()) {
    const ssize_t n = write(child.stdin_fd, payload.data() + written, payload.size() - written);
    if (n < 0) {
      if (errno == EPIPE) break;  // child exited early; its status tells the story
      close(child.stdin_fd);
      close(child.stdout_fd);
      kill_child(child.pid);
      waitpid(child.pid, nullptr, 0);
      throw ExternalTrainerError("failed to write request: " + std::string(std::strerror(errno)));
    }
    written += static_cast<std::size_t>(n);
  }
  close(child.stdin_fd);

  std::string buffer;
  bool got_line = false;
  for (;;) {
    pollfd pfd{child.stdout_fd, POLLIN, 0};
    int wait_ms = -1;
    if (has_deadline) {
      const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      wait_ms = static_cast<int>(std::max<std::int64_t>(0, remaining.count()));
      if (wait_ms == 0) {
        close(child.stdout_fd);
        kill_child(child.pid);
        waitpid(child.pid, nullptr, 0);
        throw ExternalTrainerError("timeout: no response within " +
                                   std::to_string(timeout_seconds) + "s");
      }
    }
    const int pr = poll(&pfd, 1, wait_ms);
    if (pr == 0) continue;  // loop re-checks the deadline
    if (pr < 0) {
      if (errno == EINTR) continue;
      close(child.stdout_fd);
      kill_child(child.pid);
      waitpid(child.pid, nullptr, 0);
      throw ExternalTrainerError("poll failed: " + std::string(std::strerror(errno)));
    }
    char chunk[4096];
    const ssize_t n = read(child.stdout_fd, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      close(child.stdout_fd);
      kill_child(child.pid);
      waitpid(child.pid, nullptr, 0);
      throw ExternalTrainerError("read failed: " + std::string(std::strerror(errno)));
    }
    if (n == 0) break;  // EOF
    buffer.append(chunk, static_cast<std::size_t>(n));
    if (buffer.find('\n') != std::string::npos) {
      got_line = true;
      break;
    }
  }
  close(child.stdout_fd);
  const int status = wait_with_deadline(child.pid, deadline, has_deadline);

  if (WIFEXITED(status) && WEXITSTATUS(status) != 0)
    throw ExternalTrainerError("exit status " + std::to_string(WEXITSTATUS(status)));
  if (WIFSIGNALED(status))
    throw ExternalTrainerError("trainer killed by signal " + std::to_string(WTERMSIG(status)));
  if (!got_line && buffer.empty())
    throw ExternalTrainerError("malformed response: trainer produced no output");

  const std::string line = buffer.substr(0, buffer.find('\n'));
  nlohmann::json response;
  try {
    response = nlohmann::json::parse(line);
  } catch (const std::exception&) {
    throw ExternalTrainerError("malformed response: not valid JSON: " + line);
  }
  if (response.contains("error"))
    throw ExternalTrainerError("trainer error: " + response["error"].get<std::string>());
  if (!response.contains("score") || !response["score"].is_number())
    throw ExternalTrainerError("malformed response: missing field 'score'");
  return response;
}

// ---------------------------------------------------------------------------

Executor::Executor(DataContext context, TrainerBinding binding, TrialLog* log,
                   std::size_t parallelism)
    : context_(std::move(context)), binding_(std::move(binding)), log_(log),
      parallelism_(std::max<std::size_t>(1, parallelism)) {
  if (context_.dataset == nullptr) throw std::invalid_argument("executor needs a dataset");
  binding_.validate(context_.task, context_.metric);
  valid_block_ = materialize(*context_.dataset, context_.split.valid);
  if (binding_.kind == TrainerBinding::Kind::kExternal) {
    char tmpl[] = "/tmp/subtune-trainer-XXXXXX";
    const char* dir = mkdtemp(tmpl);
    if (dir == nullptr) throw std::runtime_error("mkdtemp failed");
    scratch_dir_ = dir;
    write_csv(scratch_dir_ / "valid.csv", context_.dataset->feature_names, "target", valid_block_);
  }
}

void Executor::set_replay(std::vector<TrialRecord> records) {
  replay_.assign(records.begin(), records.end());
  for (const auto& r : records) next_id_ = std::max(next_id_, r.id + 1);
}

std::optional<TrialRecord> Executor::try_replay(const TrialSpec& spec) {
  if (replay_.empty()) return std::nullopt;
  const TrialRecord& head = replay_.front();
  const bool matches = head.config == spec.config && head.fraction == spec.fraction &&
                       head.trial_seed == spec.trial_seed &&
                       head.split_seed == context_.split_seed &&
                       head.subsample_seed == context_.subsample_seed;
  if (!matches) {
    // The run diverged from the log (different manifest or seeds); from here
    // on everything is executed fresh.
    logging::warn("trial log replay diverged after " + std::to_string(history_.size()) +
                  " records; executing remaining trials");
    replay_.clear();
    return std::nullopt;
  }
  TrialRecord rec = head;
  replay_.pop_front();
  return rec;
}

TrialRecord Executor::run_trial(const TrialSpec& spec) {
  if (auto replayed = try_replay(spec)) {
    history_.push_back(*replayed);
    return *replayed;
  }
  TrialRecord rec = execute(spec, next_id_++);
  record(rec);
  return rec;
}

std::vector<TrialRecord> Executor::run_rung(const std::vector<TrialSpec>& specs) {
  std::vector<TrialRecord> results(specs.size());
  std::vector<std::size_t> to_run;
  std::vector<std::int64_t> ids(specs.size(), -1);

  // Replay consumes matching records positionally; whatever is left runs.
  std::size_t i = 0;
  for (; i < specs.size(); ++i) {
    auto replayed = try_replay(specs[i]);
    if (!replayed) break;
    results[i] = *replayed;
  }
  for (std::size_t j = i; j < specs.size(); ++j) {
    to_run.push_back(j);
    ids[j] = next_id_++;
  }

  if (to_run.size() <= 1 || parallelism_ == 1) {
    for (std::size_t j : to_run) {
      results[j] = execute(specs[j], ids[j]);
      record(results[j]);
    }
  } else {
    std::atomic<std::size_t> cursor{0};
    const std::size_t n_workers = std::min(parallelism_, to_run.size());
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
      workers.emplace_back([&] {
        for (;;) {
          const std::size_t t = cursor.fetch_add(1);
          if (t >= to_run.size()) return;
          const std::size_t j = to_run[t];
          results[j] = execute(specs[j], ids[j]);
        }
      });
    }
    for (auto& w : workers) w.join();
    for (std::size_t j : to_run) record(results[j]);
  }

  for (std::size_t j = 0; j < i; ++j) history_.push_back(results[j]);
  // Executed records were already pushed by record(); restore order.
  if (i > 0 && !to_run.empty()) {
    std::rotate(history_.end() - static_cast<std::ptrdiff_t>(specs.size()),
                history_.end() - static_cast<std::ptrdiff_t>(i), history_.end());
  }
  return results;
}

void Executor::record(TrialRecord& rec) {
  rec.timestamp = iso_timestamp();
  if (log_ != nullptr) log_->append(rec);
  history_.push_back(rec);
}

TrialRecord Executor::execute(const TrialSpec& spec, std::int64_t id) {
  return binding_.kind == TrainerBinding::Kind::kBuiltin ? execute_builtin(spec, id)
                                                         : execute_external(spec, id);
}

TrialRecord Executor::execute_builtin(const TrialSpec& spec, std::int64_t id) {
  TrialRecord rec;
  rec.id = id;
  rec.config = spec.config;
  rec.fraction = spec.fraction;
  rec.split_seed = context_.split_seed;
  rec.subsample_seed = context_.subsample_seed;
  rec.trial_seed = spec.trial_seed;
  rec.annotations = spec.annotations;

  const auto t0 = std::chrono::steady_clock::now();
  try {
    const DataView view = subsample(context_.split.train, spec.fraction, context_.subsample_seed);
    const DataBlock block = materialize(*context_.dataset, view.rows);
    TrainOutput out = train(spec.config, block, context_.task, context_.dataset->n_classes,
                            spec.trial_seed);
    rec.score = evaluate(out.model, valid_block_, context_.metric);
    rec.train_seconds = std::max(out.train_seconds, 1e-9);
    rec.status = TrialStatus::kCompleted;
  } catch (const std::exception& e) {
    rec.status = TrialStatus::kFailed;
    rec.failure_reason = e.what();
  }
  const auto t1 = std::chrono::steady_clock::now();
  rec.total_seconds =
      std::max(std::chrono::duration<double>(t1 - t0).count(), rec.train_seconds + 1e-9);
  return rec;
}

TrialRecord Executor::execute_external(const TrialSpec& spec, std::int64_t id) {
  TrialRecord rec;
  rec.id = id;
  rec.config = spec.config;
  rec.fraction = spec.fraction;
  rec.split_seed = context_.split_seed;
  rec.subsample_seed = context_.subsample_seed;
  rec.trial_seed = spec.trial_seed;
  rec.annotations = spec.annotations;

  const auto t0 = std::chrono::steady_clock::now();
  const auto rows_path = scratch_dir_ / ("rows-" + std::to_string(id) + ".csv");
  try {
    const DataView view = subsample(context_.split.train, spec.fraction, context_.subsample_seed);
    const DataBlock block = materialize(*context_.dataset, view.rows);
    write_csv(rows_path, context_.dataset->feature_names, "target", block);

    const nlohmann::json request{{"config", spec.config.to_json()},
                                 {"rows_path", rows_path.string()},
                                 {"valid_path", (scratch_dir_ / "valid.csv").string()},
                                 {"task", to_string(context_.task)},
                                 {"metric", to_string(context_.metric)}};
    const nlohmann::json response =
        external_trainer_roundtrip(binding_.command, request, binding_.timeout_seconds);

    EvaluationScore score;
    score.value = response.at("score").get<double>();
    score.kind = context_.metric;
    score.n_evaluated = valid_block_.n_rows;
    rec.score = score;
    rec.train_seconds =
        std::max(response.value("train_seconds", 0.0), 1e-9);
    rec.status = TrialStatus::kCompleted;
  } catch (const std::exception& e) {
    rec.status = TrialStatus::kFailed;
    rec.failure_reason = e.what();
  }
  std::error_code ec;
  std::filesystem::remove(rows_path, ec);
  const auto t1 = std::chrono::steady_clock::now();
  rec.total_seconds =
      std::max(std::chrono::duration<double>(t1 - t0).count(), rec.train_seconds + 1e-9);
  return rec;
}

TrialRecord Executor::retrain_at_full(const Configuration& config, std::uint64_t trial_seed,
                                      double source_fidelity) {
  TrialSpec spec;
  spec.config = config;
  spec.fraction = 1.0;
  spec.trial_seed = trial_seed;
  spec.annotations.source_fidelity = source_fidelity;
  return run_trial(spec);
}

std::optional<TrialRecord> incumbent(const std::vector<TrialRecord>& records) {
  std::optional<TrialRecord> best;
  for (const auto& r : records) {
    if (!r.completed() || !r.score) continue;
    if (!best || r.score->value > best->score->value) best = r;
  }
  return best;
}

}  // namespace subtune
