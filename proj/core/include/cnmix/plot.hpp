#pragma once

#include <string>
#include <vector>

namespace cnmix::harness {

// One plotted series: mean with an optional +/- std band, sampled at x.
struct Curve {
  std::string label;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> std; // empty: no band
};

// Renders mean curves with shaded std bands to a standalone SVG. The exact
// series data is embedded in a <metadata> JSON block so downstream checks can
// trace every plotted point back to its source.
void write_svg_curves(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Curve>& curves);

// Parses the <metadata> block back out of an SVG written by write_svg_curves.
std::vector<Curve> read_svg_curve_data(const std::string& path);

} // namespace cnmix::harness
