#pragma once

#include <string>
#include <vector>

#include "image.hpp"

namespace placer {

// Horizontal grid of same-sized panels, each with an uppercase text label
// strip underneath. Used for side-by-side ablation figures.
Image contact_sheet(const std::vector<Image>& panels, const std::vector<std::string>& labels);

// 5x7 bitmap text, scaled 2x, white on black; exposed for tests.
Image render_label(const std::string& text, int width);

}  // namespace placer
