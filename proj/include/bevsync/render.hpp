#pragma once

#include "bevsync/metrics.hpp"
#include "bevsync/trajfield.hpp"

#include <string>

namespace bevsync::render {

/// Grayscale image of the position channel.
std::string positionPgm(const field::TrajectoryField& f);

/// Orientation as hue, position as value.
std::string orientationPpm(const field::TrajectoryField& f);

/// Structured binary dump of the three field planes, checksummed.
std::string fieldBinary(const field::TrajectoryField& f);
field::TrajectoryField fieldFromBinary(const std::string& bytes);

std::string prCurveSvg(const std::vector<eval::PrPoint>& curve,
                       const std::string& title);

}  // namespace bevsync::render
