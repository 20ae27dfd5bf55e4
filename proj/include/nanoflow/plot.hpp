#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nanoflow/ensemble.hpp"

namespace nanoflow::plot {

/// Standalone SVG: shaded raw confidence band, posterior-mean line and, when
/// given, the true spectrum. Wavelengths are drawn in micrometres.
std::string channel_svg(const ensemble::ChannelSeries& series, std::span<const double> wavelengths,
                        std::span<const double> truth = {});

/// Writes plot_{R,A,T}.svg and the plotted values as plot_{R,A,T}.csv.
/// Returns the SVG paths.
std::vector<std::filesystem::path> write_channel_plots(const ensemble::SpectralSummary& spectra,
                                                       const std::optional<dataset::SpectralTriplet>& truth,
                                                       const std::filesystem::path& dir);

}  // namespace nanoflow::plot
