#pragma once

#include <map>
#include <optional>

#include "dlaseg/data.hpp"

namespace dlaseg {

/// Pooled per-class pixel counts for one head; counts add across samples.
struct ClassCounts {
    std::size_t classes = 0;
    std::vector<std::size_t> correct;       // N_i
    std::vector<std::size_t> ground_truth;  // N'_i
    std::vector<std::size_t> predicted;     // predicted pixels per class
    std::vector<std::size_t> intersection;  // |pred ∩ gt| per class

    explicit ClassCounts(std::size_t c = 0)
        : classes(c), correct(c, 0), ground_truth(c, 0), predicted(c, 0),
          intersection(c, 0) {}

    void accumulate(const LabelMap& pred, const LabelMap& gt);
    ClassCounts& operator+=(const ClassCounts& o);

    /// N_i / N'_i; absent when the class never occurs in the ground truth.
    std::optional<double> class_accuracy(std::size_t i) const;
    double overall_accuracy() const;  // sum N_i / sum N'_i
    /// mean over classes present in gt or pred of |pred∩gt| / |pred∪gt|
    double mean_iou() const;
};

std::optional<double> class_accuracy(const LabelMap& pred, const LabelMap& gt,
                                     std::size_t cls, std::size_t classes);
double overall_accuracy(const LabelMap& pred, const LabelMap& gt, std::size_t classes);
double mean_iou(const LabelMap& pred, const LabelMap& gt, std::size_t classes);

}  // namespace dlaseg
