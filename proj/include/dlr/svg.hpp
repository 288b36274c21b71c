#pragma once

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlr::svg {

inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

/// Static interval chart: one shaded band polygon between the bounds and two
/// series paths (the truth and the lower-bound robust forecast) over the
/// forecast hours.
inline std::string interval_chart(const std::vector<double>& y_true, const std::vector<double>& y_low,
                                  const std::vector<double>& y_high, const std::string& title) {
  const size_t n = y_true.size();
  if (n < 2 || y_low.size() != n || y_high.size() != n)
    throw std::invalid_argument("interval_chart: need >= 2 equally sized series");
  const double width = 720.0, height = 400.0, ml = 60.0, mr = 20.0, mt = 40.0, mb = 40.0;
  double lo = y_true[0], hi = y_true[0];
  for (size_t i = 0; i < n; ++i) {
    lo = std::min({lo, y_true[i], y_low[i], y_high[i]});
    hi = std::max({hi, y_true[i], y_low[i], y_high[i]});
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto px = [&](size_t i) { return ml + (width - ml - mr) * static_cast<double>(i) / static_cast<double>(n - 1); };
  auto py = [&](double y) { return mt + (height - mt - mb) * (hi - y) / (hi - lo); };

  std::string band;
  for (size_t i = 0; i < n; ++i) band += num(px(i)) + "," + num(py(y_high[i])) + " ";
  for (size_t i = n; i-- > 0;) band += num(px(i)) + "," + num(py(y_low[i])) + (i ? " " : "");
  auto path_of = [&](const std::vector<double>& ys) {
    std::string d = "M " + num(px(0)) + " " + num(py(ys[0]));
    for (size_t i = 1; i < n; ++i) d += " L " + num(px(i)) + " " + num(py(ys[i]));
    return d;
  };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) +
       "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
  s += "  <rect x=\"0\" y=\"0\" width=\"" + num(width) + "\" height=\"" + num(height) + "\" fill=\"white\"/>\n";
  s += "  <text x=\"" + num(width / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
       title + "</text>\n";
  s += "  <polygon class=\"band\" points=\"" + band + "\" fill=\"#9ecae1\" fill-opacity=\"0.55\" stroke=\"none\"/>\n";
  s += "  <path class=\"truth\" d=\"" + path_of(y_true) + "\" fill=\"none\" stroke=\"#08306b\" stroke-width=\"1.8\"/>\n";
  s += "  <path class=\"robust\" d=\"" + path_of(y_low) +
       "\" fill=\"none\" stroke=\"#a63603\" stroke-width=\"1.4\" stroke-dasharray=\"5,3\"/>\n";
  s += "  <line x1=\"" + num(ml) + "\" y1=\"" + num(height - mb) + "\" x2=\"" + num(width - mr) + "\" y2=\"" +
       num(height - mb) + "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  s += "  <line x1=\"" + num(ml) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(ml) + "\" y2=\"" + num(height - mb) +
       "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = lo + (hi - lo) * k / 4.0;
    s += "  <text x=\"" + num(ml - 8) + "\" y=\"" + num(py(yv) + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(yv) + "</text>\n";
  }
  for (size_t i = 0; i < n; i += 4) {
    s += "  <text x=\"" + num(px(i)) + "\" y=\"" + num(height - mb + 16) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + std::to_string(i) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace dlr::svg
