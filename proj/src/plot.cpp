#include "nanoflow/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "io.hpp"
#include "nanoflow/error.hpp"

namespace nanoflow::plot {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 50.0;

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

const char* channel_title(const std::string& name) {
  if (name == "R") return "Total reflectance";
  if (name == "A") return "Absorbance";
  if (name == "T") return "Transmittance";
  return "Channel";
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::string polyline(const Frame& f, std::span<const double> xs, std::span<const double> ys) {
  std::string pts;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) pts += ' ';
    pts += fixed(f.px(xs[i])) + "," + fixed(f.py(ys[i]));
  }
  return pts;
}

}  // namespace

std::string channel_svg(const ensemble::ChannelSeries& s, std::span<const double> wavelengths,
                        std::span<const double> truth) {
  const std::size_t n = wavelengths.size();
  if (n == 0 || s.mean.size() != n || s.ci_low.size() != n || s.ci_high.size() != n) {
    throw domain_error("plot: series length does not match the wavelength grid");
  }
  if (!truth.empty() && truth.size() != n) throw domain_error("plot: true spectrum length does not match");

  std::vector<double> um(n);
  for (std::size_t i = 0; i < n; ++i) um[i] = wavelengths[i] * 1e6;
  double lo = *std::min_element(s.ci_low.begin(), s.ci_low.end());
  double hi = *std::max_element(s.ci_high.begin(), s.ci_high.end());
  for (double t : truth) {
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  Frame f{um.front(), n > 1 ? um.back() : um.front() + 1.0, lo - pad, hi + pad};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  o << "<title>" << channel_title(s.name) << "</title>\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";

  // Axes with five ticks each.
  o << "<g stroke=\"black\" stroke-width=\"1\">\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight << "\" y2=\""
    << kHeight - kBottom << "\"/>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
    << "\"/>\n</g>\n";
  o << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = f.x0 + (f.x1 - f.x0) * k / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * k / 4.0;
    o << "<text x=\"" << fixed(f.px(xv)) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">"
      << label(xv) << "</text>\n";
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << fixed(f.py(yv) + 4) << "\" text-anchor=\"end\">" << label(yv)
      << "</text>\n";
  }
  o << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 12
    << "\" text-anchor=\"middle\">Wavelength (&#181;m)</text>\n";
  o << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kTop - 10 << "\" text-anchor=\"middle\">"
    << channel_title(s.name) << "</text>\n</g>\n";

  // Band: upper edge left to right, lower edge right to left.
  std::string band = polyline(f, um, s.ci_high);
  for (std::size_t i = n; i-- > 0;) band += " " + fixed(f.px(um[i])) + "," + fixed(f.py(s.ci_low[i]));
  o << "<polygon class=\"ci-band\" points=\"" << band << "\" fill=\"#1f77b4\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
  o << "<polyline class=\"mean\" points=\"" << polyline(f, um, s.mean)
    << "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
  if (!truth.empty()) {
    o << "<polyline class=\"truth\" points=\"" << polyline(f, um, truth)
      << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" stroke-dasharray=\"6 3\"/>\n";
  }

  const double lx = kWidth - kRight - 150;
  o << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect x=\"" << lx << "\" y=\"" << kTop + 4 << "\" width=\"14\" height=\"10\" fill=\"#1f77b4\" fill-opacity=\"0.25\"/>"
    << "<text x=\"" << lx + 20 << "\" y=\"" << kTop + 13 << "\">95% CI</text>\n";
  o << "<line x1=\"" << lx << "\" y1=\"" << kTop + 24 << "\" x2=\"" << lx + 14 << "\" y2=\"" << kTop + 24
    << "\" stroke=\"#1f77b4\" stroke-width=\"2\"/><text x=\"" << lx + 20 << "\" y=\"" << kTop + 28
    << "\">Predicted mean</text>\n";
  if (!truth.empty()) {
    o << "<line x1=\"" << lx << "\" y1=\"" << kTop + 39 << "\" x2=\"" << lx + 14 << "\" y2=\"" << kTop + 39
      << "\" stroke=\"black\" stroke-dasharray=\"6 3\"/><text x=\"" << lx + 20 << "\" y=\"" << kTop + 43
      << "\">True</text>\n";
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

std::vector<std::filesystem::path> write_channel_plots(const ensemble::SpectralSummary& sp,
                                                       const std::optional<dataset::SpectralTriplet>& truth,
                                                       const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (std::size_t c = 0; c < 3; ++c) {
    const ensemble::ChannelSeries& s = sp.channels[c];
    std::span<const double> t;
    if (truth) {
      t = c == 0 ? std::span<const double>(truth->r_total)
                 : c == 1 ? std::span<const double>(truth->absorbance) : std::span<const double>(truth->transmittance);
    }
    const auto svg = dir / ("plot_" + s.name + ".svg");
    io::write_text_atomic(svg, channel_svg(s, sp.wavelengths, t));

    std::ostringstream csv;
    csv << "wavelength,mean,ci_low,ci_high,true\n";
    for (std::size_t i = 0; i < sp.wavelengths.size(); ++i) {
      csv << io::format_real(sp.wavelengths[i]) << ',' << io::format_real(s.mean[i]) << ','
          << io::format_real(s.ci_low[i]) << ',' << io::format_real(s.ci_high[i]) << ',';
      if (!t.empty()) csv << io::format_real(t[i]);
      csv << '\n';
    }
    io::write_text_atomic(dir / ("plot_" + s.name + ".csv"), csv.str());
    out.push_back(svg);
  }
  return out;
}

}  // namespace nanoflow::plot
