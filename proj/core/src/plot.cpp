#include "cnmix/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cnmix::harness {

namespace {

constexpr int kWidth = 860, kHeight = 520;
constexpr int kLeft = 70, kRight = 40, kTop = 50, kBottom = 60;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

} // namespace

void write_svg_curves(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Curve>& curves) {
  if (curves.empty()) throw std::invalid_argument("write_svg_curves: no curves");

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Curve& c : curves) {
    if (c.x.size() != c.mean.size() || (!c.std.empty() && c.std.size() != c.x.size()))
      throw std::invalid_argument("write_svg_curves: curve arrays disagree in length");
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      const double s = c.std.empty() ? 0.0 : c.std[i];
      xmin = std::min(xmin, c.x[i]);
      xmax = std::max(xmax, c.x[i]);
      ymin = std::min(ymin, c.mean[i] - s);
      ymax = std::max(ymax, c.mean[i] + s);
    }
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  const double pad = (ymax - ymin) * 0.08 + 1e-9;
  ymin -= pad;
  ymax += pad;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double y) { return kTop + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h; };

  nlohmann::json meta = nlohmann::json::array();
  for (const Curve& c : curves)
    meta.push_back({{"label", c.label}, {"x", c.x}, {"mean", c.mean}, {"std", c.std}});

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight
      << "\">\n";
  svg << "<metadata id=\"curve-data\">" << meta.dump() << "</metadata>\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"28\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"17\">" << title << "</text>\n";

  // axes and ticks
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\""
      << kLeft + plot_w << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double xv = xmin + (xmax - xmin) * t / 5.0;
    const double yv = ymin + (ymax - ymin) * t / 5.0;
    svg << "<line x1=\"" << px(xv) << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << px(xv)
        << "\" y2=\"" << kTop + plot_h + 5 << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << px(xv) << "\" y=\"" << kTop + plot_h + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(xv) << "</text>\n";
    svg << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << py(yv) << "\" x2=\"" << kLeft
        << "\" y2=\"" << py(yv) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << kLeft - 9 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(yv) << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 14
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << x_label << "</text>\n";
  svg << "<text x=\"20\" y=\"" << kTop + plot_h / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
      << "transform=\"rotate(-90 20 " << kTop + plot_h / 2 << ")\">" << y_label
      << "</text>\n";

  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const Curve& c = curves[ci];
    const char* color = kPalette[ci % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (!c.std.empty() && c.x.size() > 1) {
      svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" "
          << "points=\"";
      for (std::size_t i = 0; i < c.x.size(); ++i)
        svg << px(c.x[i]) << "," << py(c.mean[i] + c.std[i]) << " ";
      for (std::size_t i = c.x.size(); i-- > 0;)
        svg << px(c.x[i]) << "," << py(c.mean[i] - c.std[i]) << " ";
      svg << "\"/>\n";
    }
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" "
        << "points=\"";
    for (std::size_t i = 0; i < c.x.size(); ++i)
      svg << px(c.x[i]) << "," << py(c.mean[i]) << " ";
    svg << "\"/>\n";

    const double ly = kTop + 16.0 + 18.0 * static_cast<double>(ci);
    svg << "<line x1=\"" << kLeft + plot_w - 150 << "\" y1=\"" << ly << "\" x2=\""
        << kLeft + plot_w - 124 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kLeft + plot_w - 118 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << c.label << "</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream out(path, std::ios::trunc);
  if (!out.good()) throw std::runtime_error("cannot write plot '" + path + "'");
  out << svg.str();
}

std::vector<Curve> read_svg_curve_data(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("cannot open plot '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  const std::string open = "<metadata id=\"curve-data\">";
  const std::size_t begin = text.find(open);
  const std::size_t end = text.find("</metadata>");
  if (begin == std::string::npos || end == std::string::npos)
    throw std::runtime_error("'" + path + "' has no curve metadata");
  const nlohmann::json meta =
      nlohmann::json::parse(text.substr(begin + open.size(), end - begin - open.size()));

  std::vector<Curve> curves;
  for (const nlohmann::json& entry : meta) {
    Curve c;
    c.label = entry.at("label").get<std::string>();
    c.x = entry.at("x").get<std::vector<double>>();
    c.mean = entry.at("mean").get<std::vector<double>>();
    c.std = entry.at("std").get<std::vector<double>>();
    curves.push_back(std::move(c));
  }
  return curves;
}

} // namespace cnmix::harness
