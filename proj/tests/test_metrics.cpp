#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace rtdet;
using fixtures::box;
using fixtures::det;

TEST(Iou, Examples) {
    const auto a = box(0, 0.3, 0.4, 0.2, 0.1);
    EXPECT_EQ(iou(a, a), 1.0);
    EXPECT_EQ(iou(box(0, .2, .2, .2, .2), box(0, .8, .8, .2, .2)), 0.0);
    EXPECT_NEAR(iou(box(0, .25, .25, .5, .5), box(0, .5, .5, .5, .5)), 0.0625 / 0.4375, 1e-12);
    EXPECT_NEAR(iou(box(0, .25, .25, .5, .5), box(0, .5, .5, .5, .5)), 1.0 / 7.0, 1e-12);
}

TEST(Iou, SymmetricBoundedAndMatchesReference) {
    const auto c = fixtures::random_corpus(5);
    std::vector<BoundingBox> all;
    for (const auto& a : c.dataset.annotations) all.insert(all.end(), a.boxes.begin(), a.boxes.end());
    for (const auto& x : all) {
        for (const auto& y : all) {
            const double v = iou(x, y);
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
            EXPECT_EQ(v, iou(y, x));
            EXPECT_NEAR(v, ref::iou({0, x.cx, x.cy, x.w, x.h}, {0, y.cx, y.cy, y.w, y.h}), 1e-12);
        }
    }
}

TEST(Match, ExactHit) {
    const std::vector<BoundingBox> truths{box(0, .5, .5, .2, .2)};
    const std::vector<Detection> dets{det(0, .5, .5, .2, .2, .9)};
    const auto m = match_detections(dets, truths, 0.5);
    EXPECT_EQ(m.pairs.size(), 1u);
    EXPECT_TRUE(m.unmatched_detections.empty());
    EXPECT_TRUE(m.unmatched_truths.empty());
}

TEST(Match, HigherConfidenceWinsEvenWithLowerIou) {
    // Truth [0.4,0.6]^2. Shifting a 0.2 box by s along x gives IoU (0.2-s)/(0.2+s).
    const std::vector<BoundingBox> truths{box(0, .5, .5, .2, .2)};
    const double s06 = 0.2 * (1 - 0.6) / (1 + 0.6);
    const double s09 = 0.2 * (1 - 0.9) / (1 + 0.9);
    const std::vector<Detection> dets{det(0, .5 + s06, .5, .2, .2, .9), det(0, .5 + s09, .5, .2, .2, .8)};
    EXPECT_NEAR(iou(dets[0].box, truths[0]), 0.6, 1e-12);
    EXPECT_NEAR(iou(dets[1].box, truths[0]), 0.9, 1e-12);
    const auto m = match_detections(dets, truths, 0.5);
    ASSERT_EQ(m.pairs.size(), 1u);
    EXPECT_EQ(m.pairs[0].detection, 0u);
    EXPECT_EQ(m.unmatched_detections, std::vector<std::size_t>{1});
}

TEST(Match, ClassGate) {
    const std::vector<BoundingBox> truths{box(1, .5, .5, .2, .2)};
    const std::vector<Detection> dets{det(0, .5, .5, .2, .2, .9)};
    const auto m = match_detections(dets, truths, 0.5);
    EXPECT_TRUE(m.pairs.empty());
    EXPECT_EQ(m.unmatched_detections.size(), 1u);
    EXPECT_EQ(m.unmatched_truths.size(), 1u);
}

TEST(Match, ConfidenceTiesGoToLowerIndex) {
    const std::vector<BoundingBox> truths{box(0, .5, .5, .2, .2)};
    const std::vector<Detection> dets{det(0, .51, .5, .2, .2, .5), det(0, .5, .5, .2, .2, .5)};
    const auto m = match_detections(dets, truths, 0.5);
    ASSERT_EQ(m.pairs.size(), 1u);
    EXPECT_EQ(m.pairs[0].detection, 0u);
}

namespace {

Dataset one_image(std::vector<BoundingBox> truths) {
    Dataset ds;
    ds.class_names = {"car", "tank"};
    ds.annotations = {fixtures::annotation("img", std::move(truths))};
    return ds;
}

} // namespace

TEST(PrCurve, PerfectSingle) {
    const auto ds = one_image({box(0, .5, .5, .2, .2)});
    const ImageDetections dets{{"img", {det(0, .5, .5, .2, .2, 1.0)}}};
    const auto curve = precision_recall_curve(dets, truths_of(ds), 0.5, 0);
    ASSERT_EQ(curve.size(), 1u);
    EXPECT_EQ(curve[0].recall, 1.0);
    EXPECT_EQ(curve[0].precision, 1.0);
    EXPECT_EQ(average_precision(curve), 1.0);
}

TEST(PrCurve, FalsePositiveRankedFirst) {
    const auto ds = one_image({box(0, .5, .5, .2, .2)});
    const ImageDetections dets{{"img", {det(0, .1, .1, .1, .1, .9), det(0, .5, .5, .2, .2, .8)}}};
    const auto curve = precision_recall_curve(dets, truths_of(ds), 0.5, 0);
    ASSERT_EQ(curve.size(), 2u);
    EXPECT_EQ(curve[0].recall, 0.0);
    EXPECT_EQ(curve[0].precision, 0.0);
    EXPECT_EQ(curve[1].recall, 1.0);
    EXPECT_EQ(curve[1].precision, 0.5);
    EXPECT_NEAR(average_precision(curve), 0.5, 1e-9);
}

TEST(PrCurve, TpFpTp) {
    const auto ds = one_image({box(0, .25, .25, .2, .2), box(0, .75, .75, .2, .2)});
    const ImageDetections dets{
        {"img", {det(0, .25, .25, .2, .2, .9), det(0, .5, .1, .1, .1, .8), det(0, .75, .75, .2, .2, .7)}}};
    const auto curve = precision_recall_curve(dets, truths_of(ds), 0.5, 0);
    ASSERT_EQ(curve.size(), 3u);
    EXPECT_EQ(curve[0].recall, 0.5);
    EXPECT_EQ(curve[0].precision, 1.0);
    EXPECT_EQ(curve[1].recall, 0.5);
    EXPECT_EQ(curve[1].precision, 0.5);
    EXPECT_EQ(curve[2].recall, 1.0);
    EXPECT_NEAR(curve[2].precision, 0.6667, 1e-4);
    EXPECT_NEAR(average_precision(curve), 5.0 / 6.0, 1e-9);
    EXPECT_NEAR(average_precision(curve), 0.8333, 1e-4);
}

TEST(PrCurve, NoTruthGivesEmptyCurve) {
    const auto ds = one_image({box(0, .5, .5, .2, .2)});
    const ImageDetections dets{{"img", {det(1, .5, .5, .2, .2, .9)}}};
    EXPECT_TRUE(precision_recall_curve(dets, truths_of(ds), 0.5, 1).empty());
}

TEST(AveragePrecision, Examples) {
    EXPECT_EQ(average_precision(std::vector<PrPoint>{}), 0.0);
    EXPECT_EQ(average_precision(std::vector<PrPoint>{{1.0, 1.0}}), 1.0);
    EXPECT_NEAR(average_precision(std::vector<PrPoint>{{0.0, 0.0}, {1.0, 0.5}}), 0.5, 1e-12);
    EXPECT_NEAR(average_precision(std::vector<PrPoint>{{0.5, 1.0}, {0.5, 0.5}, {1.0, 2.0 / 3.0}}), 5.0 / 6.0, 1e-12);
}

TEST(AveragePrecision, PerfectCurveIsExactlyOne) {
    std::vector<PrPoint> curve;
    for (int k = 1; k <= 7; ++k) curve.push_back({k / 7.0, 1.0});
    EXPECT_EQ(average_precision(curve), 1.0);
}

TEST(Evaluate, DegenerateDetectionsScorePerfect) {
    const auto c = fixtures::random_corpus(11);
    ImageDetections dets;
    for (const auto& a : c.dataset.annotations) {
        for (const auto& b : a.boxes) dets[a.image_id].push_back({b, 1.0, std::nullopt});
    }
    const auto r = evaluate(dets, c.dataset, {0.5, 0.75});
    for (double m : r.map) EXPECT_EQ(m, 1.0);
    EXPECT_EQ(r.fp, 0u);
    EXPECT_EQ(r.fn, 0u);
    EXPECT_EQ(r.average_iou, 1.0);
}

TEST(Evaluate, NoDetections) {
    const auto c = fixtures::random_corpus(12);
    const auto r = evaluate({}, c.dataset, {0.5});
    std::size_t total = 0;
    for (const auto& a : c.dataset.annotations) total += a.boxes.size();
    EXPECT_EQ(r.map[0], 0.0);
    EXPECT_EQ(r.tp, 0u);
    EXPECT_EQ(r.fn, total);
}

TEST(Evaluate, UnknownImage) {
    const auto ds = one_image({box(0, .5, .5, .2, .2)});
    EXPECT_THROW(evaluate({{"other", {}}}, ds, {0.5}), UnknownImage);
    EXPECT_THROW(evaluate({}, ds, {}), InvalidArgument);
}

TEST(Evaluate, ClassWithoutTruthIsLeftOutOfMap) {
    const auto ds = one_image({box(0, .5, .5, .2, .2)});
    const ImageDetections dets{{"img", {det(0, .5, .5, .2, .2, .9), det(1, .2, .2, .1, .1, .9)}}};
    const auto r = evaluate(dets, ds, {0.5});
    EXPECT_EQ(r.truth_counts[1], 0u);
    EXPECT_EQ(r.map[0], 1.0);
    EXPECT_EQ(r.fp, 1u);
}

TEST(Evaluate, ConfidenceThresholdOnlyAffectsCounts) {
    const auto ds = one_image({box(0, .5, .5, .2, .2)});
    const ImageDetections dets{{"img", {det(0, .5, .5, .2, .2, 0.1)}}};
    const auto r = evaluate(dets, ds, {0.5}, 0.25);
    EXPECT_EQ(r.map[0], 1.0);
    EXPECT_EQ(r.tp, 0u);
    EXPECT_EQ(r.fn, 1u);
}

TEST(Confusion, AverageIouAndEmpty) {
    EXPECT_EQ(confusion_summary({}).average_iou, 0.0);
    std::vector<MatchResult> rs(2);
    rs[0].pairs = {{0, 0, 0.6}};
    rs[1].pairs = {{0, 0, 0.8}};
    const auto s = confusion_summary(rs);
    EXPECT_EQ(s.tp, 2u);
    EXPECT_NEAR(s.average_iou, 0.7, 1e-12);
}

TEST(Evaluate, MatchesReferenceOnRandomCorpora) {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const auto c = fixtures::random_corpus(seed);
        const auto got = evaluate(c.detections, c.dataset, {0.5, 0.75});
        const auto want = ref::evaluate(fixtures::to_reference(c.dataset, c.detections), 2, {0.5, 0.75}, 0.25);
        EXPECT_LE(fixtures::report_distance(got, want), 1e-9) << "seed " << seed;
    }
}

TEST(Evaluate, SeededOracleMatchesReference) {
    Dataset ds;
    ds.class_names = {"car", "tank"};
    std::mt19937_64 rng(200);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    ImageDetections dets;
    OracleConfig cfg;
    cfg.p_miss = 0.1;
    cfg.seed = 42;
    cfg.class_count = 2;
    for (int i = 0; i < 200; ++i) {
        ImageAnnotation a{"im" + std::to_string(i), 64, 48, {}};
        for (int k = 0; k < 4; ++k) a.boxes.push_back({static_cast<int>(rng() % 2), u(rng), u(rng), 0.1, 0.1});
        dets[a.image_id] = oracle_detect(a.boxes, cfg, i);
        ds.annotations.push_back(std::move(a));
    }
    const auto got = evaluate(dets, ds, {0.5, 0.75});
    const auto want = ref::evaluate(fixtures::to_reference(ds, dets), 2, {0.5, 0.75}, 0.25);
    EXPECT_LE(fixtures::report_distance(got, want), 1e-9);
    EXPECT_GT(got.fn, 0u);
}

TEST(Evaluate, InvariantToImageOrderAndDetectionShuffleAcrossImages) {
    auto c = fixtures::random_corpus(77);
    const auto base = evaluate(c.detections, c.dataset, {0.5, 0.75});
    std::reverse(c.dataset.annotations.begin(), c.dataset.annotations.end());
    const auto again = evaluate(c.detections, c.dataset, {0.5, 0.75});
    EXPECT_EQ(base.map, again.map);
    EXPECT_EQ(base.tp, again.tp);
}

TEST(Evaluate, DuplicateDetectionsAreFalsePositives) {
    const auto ds = one_image({box(0, .5, .5, .2, .2)});
    const ImageDetections dets{{"img", {det(0, .5, .5, .2, .2, .9), det(0, .5, .5, .2, .2, .8)}}};
    const auto r = evaluate(dets, ds, {0.5});
    EXPECT_EQ(r.tp, 1u);
    EXPECT_EQ(r.fp, 1u);
    EXPECT_EQ(r.map[0], 1.0);
}

TEST(Report, RendersReferenceQuantities) {
    EvalReport r;
    r.class_names = {"car", "tank"};
    r.iou_thresholds = {0.5, 0.75};
    r.map = {0.866121, 0.823662};
    r.per_class_ap = {{0.7392, 0.7}, {1.0, 0.9}};
    r.truth_counts = {10, 10};
    r.tp = 1734;
    r.fn = 201;
    r.average_iou = 0.6721;
    const auto text = render_report_table(r, "SSD-MobileNetV2");
    for (const char* needle : {"1734", "201", "67.21%", "0.823662", "86.6%", "TP=1734 FN=201 avgIoU=67.21%"}) {
        EXPECT_NE(text.find(needle), std::string::npos) << needle << "\n" << text;
    }
}

TEST(Report, JsonRoundTrip) {
    const auto c = fixtures::random_corpus(3);
    auto r = evaluate(c.detections, c.dataset, {0.5, 0.75});
    r.fps = 29.5;
    const auto back = report_from_json(report_to_json(r));
    EXPECT_EQ(back.map, r.map);
    EXPECT_EQ(back.per_class_ap, r.per_class_ap);
    EXPECT_EQ(back.tp, r.tp);
    EXPECT_EQ(back.fps, r.fps);
}

TEST(Report, SummaryTableHasColumns) {
    const auto t = render_summary_table({{"YOLOv4", 0.823, 63.0}, {"SSD", 0.866121, std::nullopt}});
    EXPECT_NE(t.find("Network"), std::string::npos);
    EXPECT_NE(t.find("82.3%"), std::string::npos);
    EXPECT_NE(t.find("86.6%"), std::string::npos);
    EXPECT_NE(t.find("63.0"), std::string::npos);
}
