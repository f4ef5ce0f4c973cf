#include "dlaseg/metrics.hpp"

namespace dlaseg {

void ClassCounts::accumulate(const LabelMap& pred, const LabelMap& gt) {
    if (pred.h != gt.h || pred.w != gt.w)
        throw ShapeError("metric maps differ in size");
    for (std::size_t i = 0; i < gt.v.size(); ++i) {
        const std::uint8_t p = pred.v[i], g = gt.v[i];
        if (p >= classes || g >= classes)
            throw ContractError("label out of range in metric computation");
        ++ground_truth[g];
        ++predicted[p];
        if (p == g) {
            ++correct[g];
            ++intersection[g];
        }
    }
}

ClassCounts& ClassCounts::operator+=(const ClassCounts& o) {
    for (std::size_t i = 0; i < classes; ++i) {
        correct[i] += o.correct[i];
        ground_truth[i] += o.ground_truth[i];
        predicted[i] += o.predicted[i];
        intersection[i] += o.intersection[i];
    }
    return *this;
}

std::optional<double> ClassCounts::class_accuracy(std::size_t i) const {
    if (ground_truth[i] == 0) return std::nullopt;
    return static_cast<double>(correct[i]) / static_cast<double>(ground_truth[i]);
}

double ClassCounts::overall_accuracy() const {
    std::size_t num = 0, den = 0;
    for (std::size_t i = 0; i < classes; ++i) {
        num += correct[i];
        den += ground_truth[i];
    }
    return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

double ClassCounts::mean_iou() const {
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t i = 0; i < classes; ++i) {
        const std::size_t uni = ground_truth[i] + predicted[i] - intersection[i];
        if (uni == 0) continue;  // class absent from gt and pred alike
        sum += static_cast<double>(intersection[i]) / static_cast<double>(uni);
        ++present;
    }
    return present ? sum / static_cast<double>(present) : 0.0;
}

std::optional<double> class_accuracy(const LabelMap& pred, const LabelMap& gt,
                                     std::size_t cls, std::size_t classes) {
    ClassCounts c(classes);
    c.accumulate(pred, gt);
    return c.class_accuracy(cls);
}

double overall_accuracy(const LabelMap& pred, const LabelMap& gt, std::size_t classes) {
    ClassCounts c(classes);
    c.accumulate(pred, gt);
    return c.overall_accuracy();
}

double mean_iou(const LabelMap& pred, const LabelMap& gt, std::size_t classes) {
    ClassCounts c(classes);
    c.accumulate(pred, gt);
    return c.mean_iou();
}

}  // namespace dlaseg
