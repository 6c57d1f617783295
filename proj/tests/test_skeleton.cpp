#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dogpain/rng.hpp"
#include "dogpain/skeleton.hpp"

using namespace dogpain::skel;
using dogpain::ContractError;
using dogpain::DegeneratePoseError;
using dogpain::RandomStream;

namespace {

SkeletonFrame fully_visible_frame(int index, double spread = 10.0) {
  SkeletonFrame f;
  f.frame_index = index;
  for (int j = 0; j < kNumKeypoints; ++j)
    f.points[j] = Keypoint{spread * j, spread * (j % 5), Vis::visible};
  return f;
}

// Walking pose with an exact left/right mirror symmetry about the spine.
SkeletonFrame symmetric_frame(int index) {
  SkeletonFrame f;
  f.frame_index = index;
  auto set = [&f](int j, double x, double y) { f.points[j] = Keypoint{x, y, Vis::visible}; };
  set(kNeck, 2.0, 1.0);
  set(kTailEnd, 12.0, 1.0);  // spine along y = 1
  set(kNose, 0.0, 1.0);      // on the axis: its own mirror image
  set(kLeftEye, 1.0, 0.0);
  set(kRightEye, 1.0, 2.0);
  // front legs mirror about y = 1, back legs likewise
  set(leg_elbow(Leg::LF), 3.0, -1.0);
  set(leg_knee(Leg::LF), 3.5, -2.0);
  set(leg_paw(Leg::LF), 4.0, -3.5);
  set(leg_elbow(Leg::RF), 3.0, 3.0);
  set(leg_knee(Leg::RF), 3.5, 4.0);
  set(leg_paw(Leg::RF), 4.0, 5.5);
  set(leg_elbow(Leg::LB), 10.0, -1.0);
  set(leg_knee(Leg::LB), 10.5, -2.0);
  set(leg_paw(Leg::LB), 11.0, -3.5);
  set(leg_elbow(Leg::RB), 10.0, 3.0);
  set(leg_knee(Leg::RB), 10.5, 4.0);
  set(leg_paw(Leg::RB), 11.0, 5.5);
  return f;
}

}  // namespace

TEST_CASE("interpolation fills interior gaps linearly") {
  std::vector<SkeletonFrame> seq;
  for (int t = 0; t <= 4; ++t) seq.push_back(fully_visible_frame(t));
  seq[0].points[kNose] = Keypoint{0, 0, Vis::visible};
  seq[4].points[kNose] = Keypoint{4, 8, Vis::visible};
  for (int t = 1; t <= 3; ++t) seq[t].points[kNose].vis = Vis::missing;

  auto [out, reports] = interpolate_missing(seq);
  CHECK(out[2].points[kNose].x == 2.0);
  CHECK(out[2].points[kNose].y == 4.0);
  CHECK(out[2].points[kNose].vis == Vis::inferred);
  CHECK(reports[2].interpolated == 1);
  CHECK(reports[0].interpolated == 0);
}

TEST_CASE("interpolation holds the nearest value at sequence edges") {
  std::vector<SkeletonFrame> seq;
  for (int t = 0; t < 4; ++t) seq.push_back(fully_visible_frame(t));
  seq[3].points[kLeftEye].vis = Vis::missing;
  const double px = seq[2].points[kLeftEye].x, py = seq[2].points[kLeftEye].y;

  auto [out, reports] = interpolate_missing(seq);
  CHECK(out[3].points[kLeftEye].x == px);
  CHECK(out[3].points[kLeftEye].y == py);
  CHECK(out[3].points[kLeftEye].present());
}

TEST_CASE("a keypoint never seen stays missing") {
  std::vector<SkeletonFrame> seq;
  for (int t = 0; t < 4; ++t) {
    auto f = fully_visible_frame(t);
    f.points[leg_paw(Leg::RB)].vis = Vis::missing;
    seq.push_back(f);
  }
  auto [out, reports] = interpolate_missing(seq);
  for (int t = 0; t < 4; ++t) {
    CHECK_FALSE(out[t].points[leg_paw(Leg::RB)].present());
    CHECK(reports[t].interpolated == 0);
  }
}

TEST_CASE("interpolation recovers constant-velocity motion exactly") {
  RandomStream rs(101);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = static_cast<int>(rs.uniform_int(3, 16));
    const int j = static_cast<int>(rs.uniform_int(0, kNumKeypoints - 1));
    std::vector<SkeletonFrame> seq;
    const double x0 = static_cast<double>(rs.uniform_int(-100, 100));
    const double y0 = static_cast<double>(rs.uniform_int(-100, 100));
    const double vx = static_cast<double>(rs.uniform_int(-8, 8));
    const double vy = static_cast<double>(rs.uniform_int(-8, 8));
    for (int t = 0; t < n; ++t) {
      auto f = fully_visible_frame(t);
      f.points[j] = Keypoint{x0 + vx * t, y0 + vy * t, Vis::visible};
      seq.push_back(f);
    }
    // knock out a random interior span, endpoints stay visible
    const int a = static_cast<int>(rs.uniform_int(1, n - 2));
    const int b = static_cast<int>(rs.uniform_int(a, n - 2));
    for (int t = a; t <= b; ++t) seq[t].points[j].vis = Vis::missing;

    auto [out, reports] = interpolate_missing(seq);
    for (int t = a; t <= b; ++t) {
      CHECK(out[t].points[j].x == x0 + vx * t);  // exact in 64-bit
      CHECK(out[t].points[j].y == y0 + vy * t);
    }
  }
}

TEST_CASE("interpolate_missing rejects empty input") {
  CHECK_THROWS_AS(interpolate_missing({}), ContractError);
}

TEST_CASE("discard thresholds: more than nine missing, or spine missing") {
  auto f = fully_visible_frame(0);
  for (int j = 5; j < 15; ++j) f.points[j].vis = Vis::missing;  // 10 missing
  CHECK(should_discard(f));

  auto g = fully_visible_frame(0);
  for (int j = 5; j < 14; ++j) g.points[j].vis = Vis::missing;  // 9 missing, spine intact
  CHECK_FALSE(should_discard(g));

  auto h = fully_visible_frame(0);
  h.points[kTailEnd].vis = Vis::missing;  // only the tail end missing
  CHECK(should_discard(h));
  auto i = fully_visible_frame(0);
  i.points[kNeck].vis = Vis::missing;
  CHECK(should_discard(i));
}

TEST_CASE("should_discard is monotone in visibility") {
  RandomStream rs(55);
  for (int rep = 0; rep < 500; ++rep) {
    auto f = fully_visible_frame(0);
    for (int j = 0; j < kNumKeypoints; ++j)
      if (rs.uniform() < 0.5) f.points[j].vis = Vis::missing;
    if (!should_discard(f)) {
      // adding a visible point can never flip keep -> discard
      for (int j = 0; j < kNumKeypoints; ++j) {
        auto g = f;
        g.points[j].vis = Vis::visible;
        CHECK_FALSE(should_discard(g));
      }
    }
  }
}

TEST_CASE("leg joint inference: midpoint and reflections") {
  auto f = fully_visible_frame(0);
  f.points[leg_elbow(Leg::LF)] = Keypoint{0, 0, Vis::visible};
  f.points[leg_knee(Leg::LF)] = Keypoint{0, 0, Vis::missing};
  f.points[leg_paw(Leg::LF)] = Keypoint{0, 4, Vis::visible};
  auto r = infer_leg_joint(f, Leg::LF);
  CHECK(r.points[leg_knee(Leg::LF)].x == 0.0);
  CHECK(r.points[leg_knee(Leg::LF)].y == 2.0);

  auto g = fully_visible_frame(0);
  g.points[leg_knee(Leg::RF)] = Keypoint{1, 1, Vis::visible};
  g.points[leg_paw(Leg::RF)] = Keypoint{1, 3, Vis::visible};
  g.points[leg_elbow(Leg::RF)].vis = Vis::missing;
  auto s = infer_leg_joint(g, Leg::RF);
  CHECK(s.points[leg_elbow(Leg::RF)].x == 1.0);
  CHECK(s.points[leg_elbow(Leg::RF)].y == -1.0);

  auto h = fully_visible_frame(0);
  h.points[leg_knee(Leg::LB)] = Keypoint{2, 2, Vis::visible};
  h.points[leg_elbow(Leg::LB)] = Keypoint{2, 0, Vis::visible};
  h.points[leg_paw(Leg::LB)].vis = Vis::missing;
  auto u = infer_leg_joint(h, Leg::LB);
  CHECK(u.points[leg_paw(Leg::LB)].x == 2.0);
  CHECK(u.points[leg_paw(Leg::LB)].y == 4.0);
}

TEST_CASE("leg joint inference rejects wrong missing counts") {
  auto f = fully_visible_frame(0);
  CHECK_THROWS_AS(infer_leg_joint(f, Leg::LF), ContractError);
  f.points[leg_elbow(Leg::LF)].vis = Vis::missing;
  f.points[leg_knee(Leg::LF)].vis = Vis::missing;
  CHECK_THROWS_AS(infer_leg_joint(f, Leg::LF), ContractError);
}

TEST_CASE("symmetry fill reflects the partner leg across the spine") {
  SkeletonFrame f;
  f.frame_index = 0;
  f.points[kNeck] = Keypoint{0, 0, Vis::visible};
  f.points[kTailEnd] = Keypoint{10, 0, Vis::visible};  // spine = x axis
  f.points[leg_elbow(Leg::LF)] = Keypoint{2, 3, Vis::visible};
  // RF entirely missing
  auto r = symmetry_fill(f, Leg::RF);
  CHECK(r.points[leg_elbow(Leg::RF)].x == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.points[leg_elbow(Leg::RF)].y == doctest::Approx(-3.0).epsilon(1e-12));
  CHECK_FALSE(r.points[leg_knee(Leg::RF)].present());  // no donor for the knee
}

TEST_CASE("a point on the spine line reflects to itself") {
  SkeletonFrame f;
  f.points[kNeck] = Keypoint{1, 1, Vis::visible};
  f.points[kTailEnd] = Keypoint{5, 5, Vis::visible};
  f.points[leg_elbow(Leg::LB)] = Keypoint{3, 3, Vis::visible};  // on the line
  auto r = symmetry_fill(f, Leg::RB);
  CHECK(r.points[leg_elbow(Leg::RB)].x == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(r.points[leg_elbow(Leg::RB)].y == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("symmetry fill across a vertical spine") {
  SkeletonFrame f;
  f.points[kNeck] = Keypoint{0, 0, Vis::visible};
  f.points[kTailEnd] = Keypoint{0, 10, Vis::visible};  // spine = y axis
  f.points[leg_paw(Leg::LF)] = Keypoint{-1, 5, Vis::visible};
  auto r = symmetry_fill(f, Leg::RF);
  CHECK(r.points[leg_paw(Leg::RF)].x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.points[leg_paw(Leg::RF)].y == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("symmetry fill agrees with the analytic 2-D reflection matrix") {
  RandomStream rs(77);
  for (int rep = 0; rep < 200; ++rep) {
    SkeletonFrame f;
    const double nx = rs.uniform(-20, 20), ny = rs.uniform(-20, 20);
    double tx = rs.uniform(-20, 20), ty = rs.uniform(-20, 20);
    if (std::hypot(tx - nx, ty - ny) < 1e-3) tx += 5.0;
    f.points[kNeck] = Keypoint{nx, ny, Vis::visible};
    f.points[kTailEnd] = Keypoint{tx, ty, Vis::visible};
    const double px = rs.uniform(-20, 20), py = rs.uniform(-20, 20);
    f.points[leg_knee(Leg::LF)] = Keypoint{px, py, Vis::visible};

    auto r = symmetry_fill(f, Leg::RF);
    // analytic reflection: R = [[cos2t, sin2t], [sin2t, -cos2t]] about the
    // line through (nx,ny) at angle t
    const double theta = std::atan2(ty - ny, tx - nx);
    const double c = std::cos(2 * theta), s = std::sin(2 * theta);
    const double qx = px - nx, qy = py - ny;
    const double ex = nx + c * qx + s * qy;
    const double ey = ny + s * qx - c * qy;
    CHECK(r.points[leg_knee(Leg::RF)].x == doctest::Approx(ex).epsilon(1e-9));
    CHECK(r.points[leg_knee(Leg::RF)].y == doctest::Approx(ey).epsilon(1e-9));
  }
}

TEST_CASE("symmetry fill mirror-symmetric reconstruction is exact") {
  RandomStream rs(78);
  for (int rep = 0; rep < 200; ++rep) {
    auto f = symmetric_frame(0);
    // drop one whole leg; its mirror partner reconstructs it
    const Leg leg = static_cast<Leg>(rs.uniform_int(0, 3));
    auto broken = f;
    for (int joint : {leg_elbow(leg), leg_knee(leg), leg_paw(leg)})
      broken.points[joint].vis = Vis::missing;
    auto r = symmetry_fill(broken, leg);
    for (int joint : {leg_elbow(leg), leg_knee(leg), leg_paw(leg)}) {
      REQUIRE(r.points[joint].present());
      CHECK(std::abs(r.points[joint].x - f.points[joint].x) < 1e-9);
      CHECK(std::abs(r.points[joint].y - f.points[joint].y) < 1e-9);
    }
  }
}

TEST_CASE("symmetry fill falls back to the same-side leg translation") {
  SkeletonFrame f;
  f.points[kNeck] = Keypoint{0, 0, Vis::visible};
  f.points[kTailEnd] = Keypoint{10, 0, Vis::visible};
  // both front legs lost except LF elbow; LB fully visible
  f.points[leg_elbow(Leg::LF)] = Keypoint{2, 3, Vis::visible};
  f.points[leg_elbow(Leg::LB)] = Keypoint{8, 3, Vis::visible};
  f.points[leg_knee(Leg::LB)] = Keypoint{8.5, 4, Vis::visible};
  f.points[leg_paw(Leg::LB)] = Keypoint{9, 5.5, Vis::visible};
  auto r = symmetry_fill(f, Leg::LF);
  // shift = LF elbow - LB elbow = (-6, 0)
  CHECK(r.points[leg_knee(Leg::LF)].x == doctest::Approx(2.5));
  CHECK(r.points[leg_knee(Leg::LF)].y == doctest::Approx(4.0));
  CHECK(r.points[leg_paw(Leg::LF)].x == doctest::Approx(3.0));
  CHECK(r.points[leg_paw(Leg::LF)].y == doctest::Approx(5.5));
}

TEST_CASE("symmetry fill requires the spine") {
  SkeletonFrame f;
  f.points[kNeck].vis = Vis::missing;
  f.points[kTailEnd] = Keypoint{1, 1, Vis::visible};
  CHECK_THROWS_AS(symmetry_fill(f, Leg::LF), ContractError);
}

TEST_CASE("repair leaves a fully visible clip unchanged") {
  std::vector<SkeletonFrame> seq;
  for (int t = 0; t < 8; ++t) seq.push_back(fully_visible_frame(t));
  auto res = repair(seq);
  CHECK_FALSE(res.clip_dropped);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    CHECK(res.reports[t].interpolated == 0);
    CHECK(res.reports[t].leg_inferred == 0);
    CHECK(res.reports[t].symmetry_filled == 0);
    for (int j = 0; j < kNumKeypoints; ++j) {
      CHECK(res.frames[t].points[j].x == seq[t].points[j].x);
      CHECK(res.frames[t].points[j].y == seq[t].points[j].y);
    }
  }
}

TEST_CASE("repair drops the clip when a frame stays badly broken") {
  std::vector<SkeletonFrame> seq;
  for (int t = 0; t < 8; ++t) seq.push_back(fully_visible_frame(t));
  // 12 points missing in frame 3 for the whole clip: interpolation cannot help
  for (int j = 5; j < 17; ++j)
    for (int t = 0; t < 8; ++t) seq[t].points[j].vis = Vis::missing;
  auto res = repair(seq);
  CHECK(res.clip_dropped);
  CHECK(res.drop_reason == RepairReport::Reason::too_many_missing);
  CHECK(res.reports[3].discarded);
}

TEST_CASE("temporal interpolation preempts leg inference") {
  // one knee missing in every frame but visible at both clip ends:
  // rule 1 repairs it and rule 3 never fires
  std::vector<SkeletonFrame> seq;
  for (int t = 0; t < 8; ++t) seq.push_back(fully_visible_frame(t));
  for (int t = 1; t < 7; ++t) seq[t].points[leg_knee(Leg::LF)].vis = Vis::missing;
  auto res = repair(seq);
  CHECK_FALSE(res.clip_dropped);
  for (int t = 1; t < 7; ++t) {
    CHECK(res.reports[t].interpolated == 1);
    CHECK(res.reports[t].leg_inferred == 0);
    CHECK(res.frames[t].points[leg_knee(Leg::LF)].present());
  }
}

TEST_CASE("repair is idempotent") {
  RandomStream rs(91);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<SkeletonFrame> seq;
    for (int t = 0; t < 8; ++t) {
      auto f = symmetric_frame(t);
      for (int j = 0; j < kNumKeypoints; ++j) {
        f.points[j].x += rs.uniform(-0.2, 0.2);
        f.points[j].y += rs.uniform(-0.2, 0.2);
        if (j != kNeck && j != kTailEnd && rs.uniform() < 0.15) f.points[j].vis = Vis::missing;
      }
      seq.push_back(f);
    }
    auto once = repair(seq);
    if (once.clip_dropped) continue;
    auto twice = repair(once.frames);
    REQUIRE_FALSE(twice.clip_dropped);
    for (std::size_t t = 0; t < once.frames.size(); ++t) {
      CHECK(twice.reports[t].interpolated == 0);
      CHECK(twice.reports[t].leg_inferred == 0);
      CHECK(twice.reports[t].symmetry_filled == 0);
      for (int j = 0; j < kNumKeypoints; ++j) {
        CHECK(twice.frames[t].points[j].present() == once.frames[t].points[j].present());
        CHECK(twice.frames[t].points[j].x == once.frames[t].points[j].x);
        CHECK(twice.frames[t].points[j].y == once.frames[t].points[j].y);
      }
    }
  }
}

TEST_CASE("normalization arithmetic from the spine landmarks") {
  auto f = fully_visible_frame(0);
  f.points[kNeck] = Keypoint{2, 2, Vis::visible};
  f.points[kTailEnd] = Keypoint{4, 2, Vis::visible};
  f.points[kNose] = Keypoint{5, 3, Vis::visible};
  auto n = normalize(f);
  CHECK(n.points[kNose].x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(n.points[kNose].y == doctest::Approx(0.5).epsilon(1e-12));
  // the spine always lands on (-0.5,0)-(0.5,0)
  CHECK(n.points[kNeck].x == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(n.points[kNeck].y == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(n.points[kTailEnd].x == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(n.points[kTailEnd].y == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("normalization is invariant to translation and uniform scale") {
  RandomStream rs(103);
  for (int rep = 0; rep < 1000; ++rep) {
    SkeletonFrame f;
    for (int j = 0; j < kNumKeypoints; ++j)
      f.points[j] = Keypoint{rs.uniform(-50, 50), rs.uniform(-50, 50), Vis::visible};
    if (std::hypot(f.points[kNeck].x - f.points[kTailEnd].x,
                   f.points[kNeck].y - f.points[kTailEnd].y) < 1e-3)
      f.points[kTailEnd].x += 10;

    auto base = normalize(f);

    auto g = f;
    const double dx = 37.0, dy = -12.0;
    const double s = rs.uniform(0.1, 10.0);
    for (auto& p : g.points) {
      p.x = (p.x + dx) * s;
      p.y = (p.y + dy) * s;
    }
    auto moved = normalize(g);
    for (int j = 0; j < kNumKeypoints; ++j) {
      CHECK(std::abs(base.points[j].x - moved.points[j].x) < 1e-9);
      CHECK(std::abs(base.points[j].y - moved.points[j].y) < 1e-9);
    }

    // root at origin, spine length 1
    const double mx = (base.points[kNeck].x + base.points[kTailEnd].x) / 2;
    const double my = (base.points[kNeck].y + base.points[kTailEnd].y) / 2;
    CHECK(std::abs(mx) < 1e-9);
    CHECK(std::abs(my) < 1e-9);
    const double len = std::hypot(base.points[kNeck].x - base.points[kTailEnd].x,
                                  base.points[kNeck].y - base.points[kTailEnd].y);
    CHECK(std::abs(len - 1.0) < 1e-9);
  }
}

TEST_CASE("normalize rejects a degenerate spine") {
  auto f = fully_visible_frame(0);
  f.points[kNeck] = Keypoint{3, 3, Vis::visible};
  f.points[kTailEnd] = Keypoint{3, 3, Vis::visible};
  CHECK_THROWS_AS(normalize(f), DegeneratePoseError);
}

TEST_CASE("pose vector maps missing points to the root") {
  auto f = fully_visible_frame(0);
  f.points[kNeck] = Keypoint{0, 0, Vis::visible};
  f.points[kTailEnd] = Keypoint{2, 0, Vis::visible};
  f.points[kNose].vis = Vis::missing;
  auto v = pose_vector(normalize(f));
  CHECK(v[2 * kNose] == 0.0);
  CHECK(v[2 * kNose + 1] == 0.0);
  CHECK(v[2 * kNeck] == doctest::Approx(-0.5));
}
