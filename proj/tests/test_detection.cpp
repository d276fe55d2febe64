#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"

using namespace rtdet;
using fixtures::box;
using fixtures::det;

namespace {

Detection corners(int cls, double x0, double x1, double conf) {
    return {*box_from_corners(cls, x0, 0.4, x1, 0.6), conf, std::nullopt};
}

} // namespace

TEST(Filter, KeepsAtOrAboveThreshold) {
    const std::vector<Detection> d{det(0, .5, .5, .1, .1, .2), det(0, .5, .5, .1, .1, .25), det(1, .5, .5, .1, .1, .9)};
    const auto out = filter_by_confidence(d, 0.25);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].confidence, 0.25);
}

TEST(Nms, SuppressesOverlap) {
    const std::vector<Detection> d{det(0, .5, .5, .2, .2, .8), det(0, .505, .5, .2, .2, .9)};
    const auto out = nms(d, 0.5);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].confidence, .9);
}

TEST(Nms, ClassWise) {
    const std::vector<Detection> d{det(0, .5, .5, .2, .2, .9), det(1, .5, .5, .2, .2, .8)};
    EXPECT_EQ(nms(d, 0.5).size(), 2u);
}

TEST(Nms, ChainKeepsEnds) {
    // A-B and B-C overlap at IoU 0.6; A-C at 0.2 (the Jaccard distance is a
    // metric, so A-C cannot drop below 0.2 here).
    const auto a = corners(0, 0.2, 0.5, 0.9);
    const auto b = corners(0, 0.2, 0.7, 0.8);
    const auto c = corners(0, 0.4, 0.7, 0.7);
    EXPECT_NEAR(iou(a.box, b.box), 0.6, 1e-12);
    EXPECT_NEAR(iou(b.box, c.box), 0.6, 1e-12);
    EXPECT_NEAR(iou(a.box, c.box), 0.2, 1e-12);
    const std::vector<Detection> d{c, a, b};
    const auto out = nms(d, 0.5);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].box, a.box);
    EXPECT_EQ(out[1].box, c.box);
}

TEST(Nms, IdempotentSubsetSorted) {
    const auto corpus = fixtures::random_corpus(21);
    for (const auto& [id, dets] : corpus.detections) {
        const auto once = nms(dets, 0.45);
        EXPECT_EQ(nms(once, 0.45).size(), once.size());
        EXPECT_LE(once.size(), dets.size());
        for (std::size_t i = 1; i < once.size(); ++i) EXPECT_GE(once[i - 1].confidence, once[i].confidence);
        for (const auto& k : once) {
            EXPECT_TRUE(std::any_of(dets.begin(), dets.end(),
                                    [&](const Detection& x) { return x.box == k.box && x.confidence == k.confidence; }));
        }
        for (std::size_t i = 0; i < once.size(); ++i) {
            for (std::size_t j = i + 1; j < once.size(); ++j) {
                if (once[i].box.class_id == once[j].box.class_id) {
                    EXPECT_LT(iou(once[i].box, once[j].box), 0.45);
                }
            }
        }
    }
    EXPECT_EQ(kDefaultNmsThreshold, 0.45);
}

TEST(Oracle, DegenerateReproducesTruths) {
    const std::vector<BoundingBox> truths{box(0, .3, .3, .1, .1), box(1, .7, .6, .2, .3)};
    OracleConfig cfg;
    const auto out = oracle_detect(truths, cfg, 5);
    ASSERT_EQ(out.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(out[i].box, truths[i]);
        EXPECT_GE(out[i].confidence, 0.9);
        EXPECT_EQ(out[i].frame_id, 5);
    }
}

TEST(Oracle, AlwaysMissing) {
    const std::vector<BoundingBox> truths{box(0, .3, .3, .1, .1)};
    OracleConfig cfg;
    cfg.p_miss = 1.0;
    EXPECT_TRUE(oracle_detect(truths, cfg, 0).empty());
    cfg.fp_rate = 3.0;
    cfg.class_count = 2;
    std::size_t spurious = 0;
    for (int f = 0; f < 100; ++f) {
        for (const auto& d : oracle_detect(truths, cfg, f)) {
            EXPECT_TRUE(is_valid_box(d.box));
            EXPECT_LE(d.confidence, cfg.fp_confidence_hi);
            ++spurious;
        }
    }
    EXPECT_GT(spurious, 200u);
    EXPECT_LT(spurious, 400u);
}

TEST(Oracle, MissFractionMatchesConfiguredRate) {
    OracleConfig cfg;
    cfg.p_miss = 0.1;
    cfg.seed = 42;
    const std::vector<BoundingBox> truths(10, box(0, .5, .5, .1, .1));
    std::size_t seen = 0;
    for (int f = 0; f < 1000; ++f) seen += oracle_detect(truths, cfg, f).size();
    const double miss = 1.0 - static_cast<double>(seen) / 10000.0;
    EXPECT_NEAR(miss, 0.1, 0.01);
}

TEST(Oracle, DeterministicPerFrameAndOrderIndependent) {
    OracleConfig cfg;
    cfg.p_miss = 0.2;
    cfg.jitter_sigma = 0.01;
    cfg.fp_rate = 1.0;
    cfg.seed = 9;
    cfg.class_count = 2;
    const std::vector<BoundingBox> truths{box(0, .3, .3, .1, .1), box(1, .7, .6, .2, .3)};
    const auto a = oracle_detect(truths, cfg, 17);
    oracle_detect(truths, cfg, 3);
    const auto b = oracle_detect(truths, cfg, 17);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].box, b[i].box);
        EXPECT_EQ(a[i].confidence, b[i].confidence);
        EXPECT_TRUE(is_valid_box(a[i].box));
    }
}

TEST(Oracle, InvalidConfig) {
    OracleConfig cfg;
    cfg.p_miss = 1.5;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.tp_confidence_lo = 0.9;
    cfg.tp_confidence_hi = 0.1;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(Descriptor, OracleAlwaysLoadable) {
    fixtures::TempDir dir;
    std::ofstream(dir / "m.json") << R"({"backend":"oracle","class_names":["car","tank"],"p_miss":0.1,"seed":3})";
    const auto backend = load_external_backend(dir / "m.json", {"car", "tank"});
    EXPECT_EQ(backend->model_name(), "oracle");
    EXPECT_EQ(backend->class_names().size(), 2u);
}

TEST(Descriptor, Errors) {
    fixtures::TempDir dir;
    EXPECT_THROW(load_external_backend(dir / "absent.json", {}), ModelNotFound);
    std::ofstream(dir / "ext.json") << R"({"backend":"external","model_path":"weights.onnx","class_names":["car","tank"]})";
    EXPECT_THROW(load_external_backend(dir / "ext.json", {"car", "tank"}), ModelNotFound);
    std::ofstream(dir / "weights.onnx") << "x";
    EXPECT_THROW(load_external_backend(dir / "ext.json", {"car", "tank"}), UnsupportedBackend);
    std::ofstream(dir / "three.json") << R"({"backend":"oracle","class_names":["car","tank","truck"]})";
    EXPECT_THROW(load_external_backend(dir / "three.json", {"car", "tank"}), ClassListMismatch);
    std::ofstream(dir / "odd.json") << R"({"backend":"quantum","class_names":["car"]})";
    EXPECT_THROW(load_external_backend(dir / "odd.json", {}), UnsupportedBackend);
}

TEST(Descriptor, JsonRoundTrip) {
    ModelDescriptor d;
    d.class_names = {"car", "tank"};
    d.oracle.p_miss = 0.25;
    d.oracle.fp_confidence_lo = 0.1;
    d.throttle_fps = 30;
    d.oracle.seed = 12;
    const auto back = descriptor_from_json(descriptor_to_json(d));
    EXPECT_EQ(back.class_names, d.class_names);
    EXPECT_EQ(back.oracle.p_miss, 0.25);
    EXPECT_EQ(back.oracle.fp_confidence_lo, 0.1);
    EXPECT_EQ(back.oracle.seed, 12u);
    EXPECT_EQ(back.throttle_fps, 30);
}

TEST(Random, KeyedStreamsAreStableAndIndependent) {
    const auto a = keyed_stream(1, 2, 3, RngPurpose::Miss);
    const auto b = keyed_stream(1, 2, 3, RngPurpose::Miss);
    const auto c = keyed_stream(1, 2, 3, RngPurpose::JitterX);
    EXPECT_EQ(a.at(0), b.at(0));
    EXPECT_NE(a.at(0), c.at(0));
    EXPECT_EQ(mix64(0), 0xe220a8397b1dcdafULL);
    KeyedStream s(5);
    double sum = 0;
    for (int i = 0; i < 10000; ++i) {
        const double u = s.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / 10000, 0.5, 0.02);
    KeyedStream p(6);
    double psum = 0;
    for (int i = 0; i < 5000; ++i) psum += static_cast<double>(p.poisson(2.0));
    EXPECT_NEAR(psum / 5000, 2.0, 0.1);
}
