#include "dlaseg/render.hpp"

namespace dlaseg {

Tensor render_labels(const LabelMap& boundary, const LabelMap& room) {
    return rasterize(boundary, room);
}

Tensor render_comparison(const Tensor& image, const LabelMap& gt_boundary,
                         const LabelMap& gt_room, const LabelMap& pred_boundary,
                         const LabelMap& pred_room) {
    if (image.ndim() != 3 || image.dims[0] != 3)
        throw ShapeError("render_comparison expects a [3,H,W] image");
    const std::size_t H = image.dims[1], W = image.dims[2];
    Tensor gt = render_labels(gt_boundary, gt_room);
    Tensor pred = render_labels(pred_boundary, pred_room);

    const std::size_t OW = 3 * W + 2;
    Tensor out({3, H, OW});  // separator columns stay black
    auto blit = [&](const Tensor& src, std::size_t x0) {
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x)
                    out.data[(c * H + y) * OW + x0 + x] = src.data[(c * H + y) * W + x];
    };
    blit(image, 0);
    blit(gt, W + 1);
    blit(pred, 2 * W + 2);
    return out;
}

}  // namespace dlaseg
