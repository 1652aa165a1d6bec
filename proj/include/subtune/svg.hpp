#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace subtune::svg {

// Just enough SVG to emit the static report plots. All numbers are formatted
// with fixed precision so reruns produce identical bytes.
class Canvas {
 public:
  Canvas(int width, int height) : width_(width), height_(height) {}

  void line(double x1, double y1, double x2, double y2, const std::string& stroke = "#444",
            double stroke_width = 1.0) {
    body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" +
             num(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(stroke_width) +
             "\"/>\n";
  }

  void circle(double cx, double cy, double r, const std::string& fill) {
    body_ += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(r) +
             "\" fill=\"" + fill + "\"/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill) {
    body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) +
             "\" height=\"" + num(h) + "\" fill=\"" + fill + "\"/>\n";
  }

  void text(double x, double y, const std::string& s, int size = 11,
            const std::string& anchor = "start") {
    body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" +
             std::to_string(size) + "\" font-family=\"sans-serif\" text-anchor=\"" + anchor +
             "\">" + escape(s) + "</text>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                double stroke_width = 1.5) {
    if (pts.empty()) return;
    std::string points;
    for (const auto& [x, y] : pts) points += num(x) + "," + num(y) + " ";
    body_ += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + stroke +
             "\" stroke-width=\"" + num(stroke_width) + "\"/>\n";
  }

  std::string str() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width_) +
           "\" height=\"" + std::to_string(height_) + "\" viewBox=\"0 0 " +
           std::to_string(width_) + " " + std::to_string(height_) +
           "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + body_ + "</svg>\n";
  }

 private:
  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
  }
  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '<') out += "&lt;";
      else if (c == '>') out += "&gt;";
      else if (c == '&') out += "&amp;";
      else out += c;
    }
    return out;
  }

  int width_, height_;
  std::string body_;
};

// Maps a data range onto a pixel range with margins; degenerate ranges are
// widened so single points still land inside the frame.
class Scale {
 public:
  Scale(double data_min, double data_max, double pixel_min, double pixel_max)
      : pixel_min_(pixel_min), pixel_max_(pixel_max) {
    data_min_ = data_min;
    data_max_ = data_max;
    if (data_max_ - data_min_ < 1e-12) {
      data_min_ -= 0.5;
      data_max_ += 0.5;
    }
  }

  double operator()(double v) const {
    const double t = (v - data_min_) / (data_max_ - data_min_);
    return pixel_min_ + t * (pixel_max_ - pixel_min_);
  }

  double data_min() const { return data_min_; }
  double data_max() const { return data_max_; }

 private:
  double data_min_, data_max_, pixel_min_, pixel_max_;
};

}  // namespace subtune::svg
