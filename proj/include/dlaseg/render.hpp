#pragma once

#include "dlaseg/data.hpp"

namespace dlaseg {

/// Class-colored panel for a (boundary, room) label pair: room fill colors
/// with boundary classes drawn on top. The palette maps bijectively to the
/// class indices (see boundary_color / room_fill_color).
Tensor render_labels(const LabelMap& boundary, const LabelMap& room);

/// Side-by-side overlay: input | ground truth | prediction, separated by
/// two single-pixel black columns (width = 3*W + 2).
Tensor render_comparison(const Tensor& image, const LabelMap& gt_boundary,
                         const LabelMap& gt_room, const LabelMap& pred_boundary,
                         const LabelMap& pred_room);

}  // namespace dlaseg
