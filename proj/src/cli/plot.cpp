#include "dodt/cli/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dodt::cli {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#17becf"};

struct Range {
  double lo = 0.0, hi = 1.0;
  void widen() {
    if (hi - lo < 1e-9) {
      lo -= 1.0;
      hi += 1.0;
    }
  }
};

// Maps data coordinates onto a pixel rectangle with y growing upwards.
struct Panel {
  double x, y, w, h;
  Range xr, yr;
  double px(double v) const { return x + (v - xr.lo) / (xr.hi - xr.lo) * w; }
  double py(double v) const { return y + h - (v - yr.lo) / (yr.hi - yr.lo) * h; }
};

void axes(std::ostringstream& svg, const Panel& p, const std::string& title,
          const std::string& xlabel, const std::string& ylabel) {
  svg << "<rect x=\"" << num(p.x) << "\" y=\"" << num(p.y) << "\" width=\"" << num(p.w)
      << "\" height=\"" << num(p.h) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  svg << "<text x=\"" << num(p.x + p.w / 2) << "\" y=\"" << num(p.y - 10)
      << "\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
  svg << "<text x=\"" << num(p.x + p.w / 2) << "\" y=\"" << num(p.y + p.h + 34)
      << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(xlabel) << "</text>\n";
  svg << "<text x=\"" << num(p.x - 52) << "\" y=\"" << num(p.y + p.h / 2)
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 " << num(p.x - 52)
      << ' ' << num(p.y + p.h / 2) << ")\">" << escape(ylabel) << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = p.xr.lo + (p.xr.hi - p.xr.lo) * i / 4.0;
    const double fy = p.yr.lo + (p.yr.hi - p.yr.lo) * i / 4.0;
    svg << "<text x=\"" << num(p.px(fx)) << "\" y=\"" << num(p.y + p.h + 16)
        << "\" text-anchor=\"middle\" font-size=\"10\">" << num(fx) << "</text>\n";
    svg << "<text x=\"" << num(p.x - 6) << "\" y=\"" << num(p.py(fy) + 3)
        << "\" text-anchor=\"end\" font-size=\"10\">" << num(fy) << "</text>\n";
  }
}

}  // namespace

MetricsSeries parse_metrics(std::istream& in, const std::string& label) {
  MetricsSeries s{label, {}};
  std::string line;
  if (!std::getline(in, line)) throw PlotError(label + ": empty metrics file");
  const auto header = split_csv(line);
  for (const char* need : {"round", "env_steps_total"}) {
    if (std::find(header.begin(), header.end(), need) == header.end()) {
      throw PlotError(label + ":1: header lacks column '" + need + "'");
    }
  }
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv(line);
    if (fields.size() != header.size()) {
      throw PlotError(label + ":" + std::to_string(n) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    MetricsRow row;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const auto& f = fields[i];
      if (f.empty()) {
        row[header[i]] = std::nullopt;
        continue;
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
        throw PlotError(label + ":" + std::to_string(n) + ": column " + header[i] +
                        ": not a number: '" + f + "'");
      }
      row[header[i]] = v;
    }
    if (!row.at("round") || !row.at("env_steps_total")) {
      throw PlotError(label + ":" + std::to_string(n) + ": round and env_steps_total are required");
    }
    s.rows.push_back(std::move(row));
  }
  return s;
}

MetricsSeries load_metrics(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw PlotError(path + ": cannot open metrics file");
  auto s = parse_metrics(f, path);
  s.label = std::filesystem::path(path).stem().string();
  return s;
}

std::string return_column(const MetricsSeries& series) {
  for (const auto& r : series.rows) {
    const auto it = r.find("odt_eval_mean");
    if (it != r.end() && it->second) return "odt_eval_mean";
  }
  return "dreamer_return";
}

std::string render_svg(const std::vector<MetricsSeries>& series) {
  const double width = 900, height = 720;
  Panel curve{90, 50, 600, 280, {}, {}};
  Panel bars{90, 410, 600, 240, {}, {}};

  bool any = false;
  double bmax = 1.0;
  std::size_t rounds = 1;
  for (const auto& s : series) {
    const std::string col = return_column(s);
    for (const auto& r : s.rows) {
      const double x = *r.at("env_steps_total");
      const auto it = r.find(col);
      if (it != r.end() && it->second) {
        const double y = *it->second;
        if (!any) {
          curve.xr = {x, x};
          curve.yr = {y, y};
          any = true;
        }
        curve.xr.lo = std::min(curve.xr.lo, x);
        curve.xr.hi = std::max(curve.xr.hi, x);
        curve.yr.lo = std::min(curve.yr.lo, y);
        curve.yr.hi = std::max(curve.yr.hi, y);
      }
      const auto b = r.find("benefited_count");
      if (b != r.end() && b->second) bmax = std::max(bmax, *b->second);
    }
    rounds = std::max(rounds, s.rows.size());
  }
  curve.xr.widen();
  curve.yr.widen();
  bars.xr = {0.0, static_cast<double>(rounds)};
  bars.yr = {0.0, bmax};

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  axes(svg, curve, "Return vs environment steps", "env steps", "return");
  axes(svg, bars, "Benefited Dreamer trajectories per round", "round", "benefited_count");

  const double slot = bars.w / static_cast<double>(rounds);
  const double bar_w = slot * 0.8 / static_cast<double>(std::max<std::size_t>(1, series.size()));
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    const std::string col = return_column(s);
    svg << "<g class=\"curve\" data-series=\"" << escape(s.label) << "\" data-column=\"" << col
        << "\">\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : s.rows) {
      const auto it = r.find(col);
      if (it == r.end() || !it->second) continue;
      pts.emplace_back(curve.px(*r.at("env_steps_total")), curve.py(*it->second));
    }
    for (const auto& [x, y] : pts) svg << num(x) << ',' << num(y) << ' ';
    svg << "\"/>\n";
    for (const auto& [x, y] : pts) {
      svg << "<circle class=\"pt\" cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"2\" fill=\""
          << color << "\"/>\n";
    }
    svg << "</g>\n<g class=\"bars\" data-series=\"" << escape(s.label) << "\">\n";
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
      const auto it = s.rows[i].find("benefited_count");
      if (it == s.rows[i].end() || !it->second) continue;
      const double x0 = bars.x + slot * (static_cast<double>(i) + 0.1) + bar_w * static_cast<double>(k);
      const double top = bars.py(*it->second);
      svg << "<rect class=\"bar\" x=\"" << num(x0) << "\" y=\"" << num(top) << "\" width=\""
          << num(bar_w) << "\" height=\"" << num(bars.y + bars.h - top) << "\" fill=\"" << color
          << "\"/>\n";
    }
    svg << "</g>\n";
  }

  svg << "<g class=\"legend\">\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double y = 60 + 20 * static_cast<double>(k);
    svg << "<rect x=\"710\" y=\"" << num(y - 9) << "\" width=\"12\" height=\"12\" fill=\""
        << kPalette[k % std::size(kPalette)] << "\"/>\n"
        << "<text class=\"legend-entry\" x=\"728\" y=\"" << num(y + 1) << "\" font-size=\"12\">"
        << escape(series[k].label) << "</text>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

}  // namespace dodt::cli
