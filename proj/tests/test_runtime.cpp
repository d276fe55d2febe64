#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "fixtures.hpp"

using namespace rtdet;

// --- queue -------------------------------------------------------------------

TEST(Queue, DropOldestEvictsHeadAndReportsIt) {
    BoundedQueue<int> q(4, OverflowPolicy::DropOldest);
    std::vector<std::pair<int, int>> evictions;
    for (int i = 0; i < 7; ++i) q.push(i, [&](int& ev, int& head) { evictions.emplace_back(ev, head); });
    EXPECT_EQ(q.dropped(), 3u);
    EXPECT_EQ(evictions, (std::vector<std::pair<int, int>>{{0, 1}, {1, 2}, {2, 3}}));
    std::vector<int> rest;
    q.close();
    while (auto v = q.pop()) rest.push_back(*v);
    EXPECT_EQ(rest, (std::vector<int>{3, 4, 5, 6}));
}

TEST(Queue, BlockingPreservesEverything) {
    BoundedQueue<int> q(2);
    std::thread producer([&] {
        for (int i = 0; i < 100; ++i) q.push(i);
        q.close();
    });
    int expected = 0;
    while (auto v = q.pop()) EXPECT_EQ(*v, expected++);
    producer.join();
    EXPECT_EQ(expected, 100);
    EXPECT_EQ(q.dropped(), 0u);
}

TEST(Queue, PushAfterCloseFails) {
    BoundedQueue<int> q(1);
    q.close();
    EXPECT_FALSE(q.push(1));
    EXPECT_FALSE(q.pop().has_value());
}

// --- fps ---------------------------------------------------------------------

namespace {
constexpr std::int64_t kSec = 1'000'000'000;
}

TEST(Fps, ConstantThirtyHz) {
    FpsMeter m;
    std::int64_t t = 0;
    for (int i = 0; i < 100; ++i) {
        m.tick(t);
        t += kSec / 30;
    }
    EXPECT_NEAR(m.fps(), 30.0, 0.01);
}

TEST(Fps, InstantaneousOneHertz) {
    FpsMeter m;
    m.tick(0);
    m.tick(kSec);
    ASSERT_TRUE(m.instantaneous().has_value());
    EXPECT_DOUBLE_EQ(*m.instantaneous(), 1.0);
    EXPECT_DOUBLE_EQ(m.fps(), 1.0);
}

TEST(Fps, StepResponseCrossesThirty) {
    FpsMeter m;
    double t = 0;
    for (int i = 0; i < 200; ++i) {
        m.tick(static_cast<std::int64_t>(t));
        t += 1e9 / 10;
    }
    EXPECT_NEAR(m.fps(), 10.0, 1e-6);
    int crossed = -1;
    for (int k = 1; k <= 60; ++k) {
        t += 1e9 / 50;
        m.tick(static_cast<std::int64_t>(t));
        if (crossed < 0 && m.fps() >= 30.0) crossed = k;
    }
    EXPECT_GE(crossed, 18);
    EXPECT_LE(crossed, 25);
}

TEST(Fps, NeverNegativeOrNonFinite) {
    FpsMeter m;
    EXPECT_EQ(m.fps(), 0.0);
    m.tick(100);
    m.tick(100);
    m.tick(50);
    EXPECT_EQ(m.fps(), 0.0);
    m.tick(101);
    EXPECT_TRUE(std::isfinite(m.fps()));
    EXPECT_GE(m.fps(), 0.0);
    const std::vector<std::int64_t> ts{0, kSec / 2, kSec};
    EXPECT_DOUBLE_EQ(measure_fps(ts), 2.0);
}

// --- broadcast -----------------------------------------------------------------

TEST(Broadcast, HalfRateSubscriberKeepsOrderAndAllAlerts) {
    Broadcaster b;
    auto sub = b.subscribe(16);
    std::vector<std::int64_t> frames;
    std::vector<std::int64_t> alerts;
    auto consume = [&] {
        auto m = sub->try_pop();
        if (!m) return;
        const auto j = nlohmann::json::parse(m->line);
        (j["type"] == "alert" ? alerts : frames).push_back(j["frame_id"].get<std::int64_t>());
    };
    for (int f = 0; f < 1000; ++f) {
        b.publish(MessageKind::Frame, {{"type", "frame"}, {"frame_id", f}});
        if (f % 50 == 0) b.publish(MessageKind::Alert, alert_message(f, "r" + std::to_string(f)));
        if (f % 2 == 0) consume();
    }
    for (int i = 0; i < 100; ++i) consume();
    EXPECT_EQ(alerts.size(), 20u);
    EXPECT_TRUE(std::is_sorted(alerts.begin(), alerts.end()));
    ASSERT_FALSE(frames.empty());
    for (std::size_t i = 1; i < frames.size(); ++i) EXPECT_LT(frames[i - 1], frames[i]);
    EXPECT_LT(frames.size(), 1000u);
    EXPECT_EQ(frames.back(), 999);
    EXPECT_GT(sub->frames_dropped(), 0u);
}

TEST(Broadcast, NoSubscribersAndClosedPruned) {
    Broadcaster b;
    b.publish(MessageKind::Frame, {{"type", "frame"}});
    auto s = b.subscribe();
    EXPECT_EQ(b.subscriber_count(), 1u);
    s->close();
    b.publish(MessageKind::Frame, {{"type", "frame"}});
    EXPECT_EQ(b.subscriber_count(), 0u);
}

// --- session -------------------------------------------------------------------

TEST(Session, StateMachine) {
    Broadcaster b;
    auto sub = b.subscribe();
    SessionController c(&b, {"car", "tank"});
    EXPECT_EQ(c.snapshot()->status, Status::Idle);
    EXPECT_THROW(c.handle_control(Command::RecordOn), InvalidTransition);
    EXPECT_THROW(c.handle_control(Command::Stop), InvalidTransition);
    EXPECT_EQ(c.snapshot()->status, Status::Idle);

    const auto s1 = c.handle_control(Command::Start);
    EXPECT_EQ(s1.status, Status::Running);
    EXPECT_THROW(c.handle_control(Command::Start), InvalidTransition);
    EXPECT_TRUE(c.handle_control(Command::RecordOn).recording);
    EXPECT_THROW(c.handle_control(Command::RecordOn), InvalidTransition);
    EXPECT_FALSE(c.handle_control(Command::RecordOff).recording);

    CountState counts;
    counts.per_class_count[1] = 3;
    counts.total = 3;
    c.publish_metrics(s1.session_id, 30.0, 640, 480, counts, {{1, 1}});
    EXPECT_EQ(c.snapshot()->counts.total, 3u);

    c.handle_control(Command::RecordOn);
    const auto stopped = c.handle_control(Command::Stop);
    EXPECT_EQ(stopped.status, Status::Stopped);
    EXPECT_FALSE(stopped.recording);
    EXPECT_THROW(c.handle_control(Command::RecordOn), InvalidTransition);

    const auto s2 = c.handle_control(Command::Start);
    EXPECT_NE(s2.session_id, s1.session_id);
    EXPECT_EQ(s2.counts.total, 0u);
    EXPECT_TRUE(s2.counts.per_class_count.empty());

    // Every transition was announced; failed ones were not.
    int states = 0;
    while (auto m = sub->try_pop()) {
        EXPECT_EQ(m->kind, MessageKind::State);
        ++states;
    }
    EXPECT_EQ(states, 6);
}

TEST(Session, StaleMetricsIgnored) {
    SessionController c;
    const auto s1 = c.handle_control(Command::Start);
    c.handle_control(Command::Stop);
    c.handle_control(Command::Start);
    c.publish_metrics(s1.session_id, 99.0, 1, 1, {}, {});
    EXPECT_EQ(c.snapshot()->fps, 0.0);
}

// --- protocol ------------------------------------------------------------------

TEST(Protocol, ClientMessages) {
    EXPECT_EQ(parse_client_message(R"({"cmd":"start"})"), Command::Start);
    EXPECT_EQ(parse_client_message(R"({"cmd":"record_off"})"), Command::RecordOff);
    EXPECT_FALSE(parse_client_message(R"({"cmd":"fly"})"));
    EXPECT_FALSE(parse_client_message("not json"));
    EXPECT_FALSE(parse_client_message(R"({"command":"start"})"));
}

TEST(Protocol, FrameMessageFields) {
    FrameMessage m;
    m.session_id = 2;
    m.frame_id = 41;
    m.detections = {fixtures::det(1, .5, .5, .2, .2, .9)};
    m.counts_visible = {{1, 1}};
    m.counts_total = {{1, 1}};
    m.total_visible = 1;
    m.total_cumulative = 1;
    m.fps = 29.5;
    m.width = 640;
    m.height = 480;
    m.recording = true;
    const auto j = frame_message(m, {"car", "tank"});
    EXPECT_EQ(j["type"], "frame");
    EXPECT_EQ(j["frame_id"], 41);
    EXPECT_EQ(j["detections"][0]["class"], 1);
    EXPECT_EQ(j["detections"][0]["conf"], 0.9);
    EXPECT_EQ(j["counts_total"]["tank"], 1);
    EXPECT_EQ(j["counts_total"]["car"], 0);
    EXPECT_EQ(j["resolution"], nlohmann::json::array({640, 480}));
    EXPECT_EQ(j["status"], "running");
    EXPECT_EQ(j["recording"], true);
    EXPECT_EQ(alert_message(5, "x").dump(), R"({"frame_id":5,"rule":"x","type":"alert"})");
}

// --- recording -----------------------------------------------------------------

namespace {

FrameRecord frame_with_pixels(std::int64_t id) {
    FrameRecord f;
    f.frame_id = id;
    f.timestamp_ns = id * 1000;
    f.width = 16;
    f.height = 12;
    f.pixels = std::make_shared<const PixelImage>(16, 12, static_cast<std::uint8_t>(id));
    f.truths = std::vector<BoundingBox>{fixtures::box(0, .5, .5, .25, .25)};
    return f;
}

} // namespace

TEST(Recording, ThirtyFramesReplayable) {
    fixtures::TempDir dir;
    {
        RecordingWriter w(dir / "rec");
        for (int i = 0; i < 30; ++i) {
            LogEntry e;
            e.frame_id = i;
            e.width = 16;
            e.height = 12;
            w.write_frame(frame_with_pixels(i), {}, log_line(e));
        }
        w.close();
        EXPECT_EQ(w.frames(), 30u);
    }
    EXPECT_EQ(count_recording_frames(dir / "rec.rtrec"), 30u);
    RecordingSource src(dir / "rec.rtrec", 0.0);
    int n = 0;
    while (auto f = src.next()) {
        EXPECT_EQ(f->frame_id, n);
        ASSERT_TRUE(f->pixels);
        EXPECT_EQ(f->pixels->width, 16);
        ASSERT_TRUE(f->recorded_detections.has_value());
        ++n;
    }
    EXPECT_EQ(n, 30);
}

TEST(Recording, OverlaysAreBakedIn) {
    fixtures::TempDir dir;
    RecordingWriter w(dir / "rec");
    const std::vector<Detection> dets{fixtures::det(0, .5, .5, .5, .5, .9)};
    w.write_frame(frame_with_pixels(0), dets, "{}");
    w.close();
    RecordingReader r(dir / "rec.rtrec");
    const auto f = r.next();
    ASSERT_TRUE(f && f->pixels);
    EXPECT_NE(f->pixels->data, frame_with_pixels(0).pixels->data);
}

TEST(Recording, DiskFull) {
    if (!std::filesystem::exists("/dev/full")) GTEST_SKIP() << "/dev/full not available";
    fixtures::TempDir dir;
    EXPECT_THROW(RecordingWriter("/dev/full", dir / "side.log"), DiskFull);
}

TEST(Recording, TruncatedFileIsCorrupt) {
    fixtures::TempDir dir;
    {
        RecordingWriter w(dir / "rec");
        for (int i = 0; i < 3; ++i) w.write_frame(frame_with_pixels(i), {}, "{}");
    }
    const auto size = std::filesystem::file_size(dir / "rec.rtrec");
    std::filesystem::resize_file(dir / "rec.rtrec", size - 100);
    EXPECT_THROW(count_recording_frames(dir / "rec.rtrec"), CorruptArtifact);
    std::ofstream(dir / "bad.rtrec") << "NOT A RECORDING\n";
    EXPECT_THROW(RecordingReader(dir / "bad.rtrec"), CorruptArtifact);
}

TEST(Recording, TruncatedLogNamesLine) {
    fixtures::TempDir dir;
    LogEntry e;
    e.frame_id = 0;
    std::ofstream(dir / "detections.log") << log_line(e) << "\n" << R"({"frame_id":1,"timestamp_ns":)";
    try {
        read_log_file(dir / "detections.log");
        FAIL();
    } catch (const CorruptArtifact& ex) {
        EXPECT_NE(std::string(ex.what()).find("line 2"), std::string::npos) << ex.what();
    }
    std::ofstream(dir / "garbled.log") << log_line(e) << "\n{\"frame_id\":\n";
    try {
        read_log_file(dir / "garbled.log");
        FAIL();
    } catch (const CorruptArtifact& ex) {
        EXPECT_NE(std::string(ex.what()).find("line 2"), std::string::npos) << ex.what();
    }
}

TEST(Recording, LogLineRoundTrip) {
    LogEntry e;
    e.frame_id = 12;
    e.timestamp_ns = 400;
    e.width = 640;
    e.height = 480;
    e.detections = {fixtures::det(1, .25, .5, .125, .25, .75)};
    e.counts_total = {{"car", 0}, {"tank", 1}};
    e.alerts = {"tank_present"};
    const auto line = log_line(e);
    EXPECT_EQ(log_line(parse_log_line(line, 1)), line);
    LogEntry drop;
    drop.frame_id = 4;
    drop.dropped = true;
    EXPECT_EQ(log_line(drop), R"({"dropped":true,"frame_id":4})");
}

// --- sources -------------------------------------------------------------------

TEST(Sources, SyntheticLiveness) {
    auto s = fixtures::scene(3, {fixtures::object(0, .5, .5)});
    EXPECT_FALSE(SyntheticSource(s).live());
    s.fps = 30;
    EXPECT_TRUE(SyntheticSource(s).live());
}

TEST(Sources, RandomSceneJson) {
    const auto j = nlohmann::json::parse(R"({"frames":100,"random":{"seed":3,"objects":4,"max_dropout":2}})");
    const auto s = scene_from_json(j);
    EXPECT_EQ(s.objects.size(), 4u);
    EXPECT_EQ(scene_object_count(s), 4u);
    EXPECT_THROW(random_scene(1, 17, 100, 0), InvalidArgument);
}

TEST(Sources, ImageSequenceCarriesLabels) {
    fixtures::TempDir dir;
    Dataset ds;
    ds.class_names = {"car"};
    ds.annotations = {fixtures::annotation("f0", {fixtures::box(0, .5, .5, .2, .2)}), fixtures::annotation("f1", {})};
    fixtures::write_dataset(ds, dir.path());
    ImageSequenceSource src(dir.path(), 1);
    const auto a = src.next();
    ASSERT_TRUE(a && a->truths && a->pixels);
    EXPECT_EQ(a->truths->size(), 1u);
    const auto b = src.next();
    ASSERT_TRUE(b);
    EXPECT_EQ(b->frame_id, 1);
    EXPECT_FALSE(src.next());
    EXPECT_THROW(ImageSequenceSource("/nonexistent", 1), SourceUnavailable);
}

TEST(Sources, UnknownTypeUnavailable) {
    EXPECT_THROW(make_source({{"type", "carrier-pigeon"}}, {}, 2), SourceUnavailable);
    EXPECT_THROW(make_source({{"type", "replay"}, {"path", "/nonexistent"}}, {}, 2), SourceUnavailable);
}
