#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dlaseg/metrics.hpp"
#include "oracles.hpp"

using namespace dlaseg;

namespace {

LabelMap from_rows(std::initializer_list<std::initializer_list<int>> rows) {
    LabelMap m(rows.size(), rows.begin()->size());
    std::size_t y = 0;
    for (const auto& row : rows) {
        std::size_t x = 0;
        for (int v : row) m.at(y, x++) = static_cast<std::uint8_t>(v);
        ++y;
    }
    return m;
}

}  // namespace

TEST_CASE("perfect prediction: every present class scores 1.0 everywhere") {
    LabelMap gt = from_rows({{0, 1, 2}, {1, 1, 2}, {0, 2, 2}});
    ClassCounts c(3);
    c.accumulate(gt, gt);
    for (std::size_t i = 0; i < 3; ++i) {
        auto a = c.class_accuracy(i);
        REQUIRE(a.has_value());
        CHECK(*a == 1.0);
    }
    CHECK(c.overall_accuracy() == 1.0);
    CHECK(c.mean_iou() == 1.0);
}

TEST_CASE("hand-counted 2x2 example") {
    LabelMap gt = from_rows({{1, 1}, {2, 2}});
    LabelMap pred = from_rows({{1, 2}, {2, 2}});
    ClassCounts c(3);
    c.accumulate(pred, gt);
    CHECK(*c.class_accuracy(1) == 0.5);
    CHECK(*c.class_accuracy(2) == 1.0);
    CHECK(c.overall_accuracy() == 0.75);
    // IoU: class 1 -> 1/2, class 2 -> 2/3, class 0 absent from both
    CHECK(c.mean_iou() == doctest::Approx((0.5 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
}

TEST_CASE("a class absent from the ground truth reports no accuracy, not zero") {
    LabelMap gt = from_rows({{0, 0}, {0, 0}});
    LabelMap pred = from_rows({{0, 1}, {0, 0}});
    ClassCounts c(3);
    c.accumulate(pred, gt);
    CHECK(!c.class_accuracy(1).has_value());
    CHECK(!c.class_accuracy(2).has_value());
    CHECK(c.class_accuracy(0).has_value());
}

TEST_CASE("all-wrong prediction gives overall accuracy 0") {
    LabelMap gt = from_rows({{1, 1}, {1, 1}});
    LabelMap pred = from_rows({{2, 2}, {2, 2}});
    ClassCounts c(3);
    c.accumulate(pred, gt);
    CHECK(c.overall_accuracy() == 0.0);
}

TEST_CASE("disjoint single-class masks give IoU 0 for that class") {
    LabelMap gt = from_rows({{1, 1}, {0, 0}});
    LabelMap pred = from_rows({{0, 0}, {1, 1}});
    ClassCounts c(2);
    c.accumulate(pred, gt);
    // both classes have union > 0, intersection 0
    CHECK(c.mean_iou() == 0.0);
}

TEST_CASE("random label maps match the brute-force oracle exactly") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t classes = 2 + trial % 5;
        LabelMap gt(8, 8), pred(8, 8);
        for (auto& v : gt.v) v = static_cast<std::uint8_t>(rng() % classes);
        for (auto& v : pred.v) v = static_cast<std::uint8_t>(rng() % classes);
        ClassCounts c(classes);
        c.accumulate(pred, gt);
        oracle::NaiveMetrics want = oracle::naive_metrics(pred, gt, classes);
        for (std::size_t i = 0; i < classes; ++i) {
            auto got = c.class_accuracy(i);
            if (std::isnan(want.class_acc[i])) {
                CHECK(!got.has_value());
            } else {
                REQUIRE(got.has_value());
                CHECK(*got == want.class_acc[i]);
            }
        }
        CHECK(c.overall_accuracy() == want.overall);
        CHECK(c.mean_iou() == want.miou);
    }
}

TEST_CASE("1000 random 16x16 pairs: oracle equivalence on the free functions") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        LabelMap gt(16, 16), pred(16, 16);
        for (auto& v : gt.v) v = static_cast<std::uint8_t>(rng() % 4);
        for (auto& v : pred.v) v = static_cast<std::uint8_t>(rng() % 4);
        oracle::NaiveMetrics want = oracle::naive_metrics(pred, gt, 4);
        CHECK(overall_accuracy(pred, gt, 4) == want.overall);
        CHECK(mean_iou(pred, gt, 4) == want.miou);
    }
}

TEST_CASE("pooled counts equal the sum of per-sample counts") {
    std::mt19937_64 rng(3);
    ClassCounts pooled(3);
    std::vector<std::pair<LabelMap, LabelMap>> pairs;
    for (int i = 0; i < 5; ++i) {
        LabelMap gt(6, 6), pred(6, 6);
        for (auto& v : gt.v) v = static_cast<std::uint8_t>(rng() % 3);
        for (auto& v : pred.v) v = static_cast<std::uint8_t>(rng() % 3);
        pooled.accumulate(pred, gt);
        pairs.emplace_back(pred, gt);
    }
    ClassCounts summed(3);
    for (auto& [pred, gt] : pairs) {
        ClassCounts one(3);
        one.accumulate(pred, gt);
        summed += one;
    }
    CHECK(summed.correct == pooled.correct);
    CHECK(summed.ground_truth == pooled.ground_truth);
    CHECK(summed.predicted == pooled.predicted);
    CHECK(summed.intersection == pooled.intersection);
}

TEST_CASE("metrics stay in [0,1] for arbitrary inputs") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        LabelMap gt(10, 10), pred(10, 10);
        for (auto& v : gt.v) v = static_cast<std::uint8_t>(rng() % 7);
        for (auto& v : pred.v) v = static_cast<std::uint8_t>(rng() % 7);
        ClassCounts c(7);
        c.accumulate(pred, gt);
        CHECK(c.overall_accuracy() >= 0.0);
        CHECK(c.overall_accuracy() <= 1.0);
        CHECK(c.mean_iou() >= 0.0);
        CHECK(c.mean_iou() <= 1.0);
        for (std::size_t i = 0; i < 7; ++i)
            if (auto a = c.class_accuracy(i)) {
                CHECK(*a >= 0.0);
                CHECK(*a <= 1.0);
            }
    }
}
