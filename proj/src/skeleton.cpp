#include "dogpain/skeleton.hpp"

#include <algorithm>
#include <cmath>

namespace dogpain::skel {

Leg mirror_leg(Leg l) {
  switch (l) {
    case Leg::LF: return Leg::RF;
    case Leg::RF: return Leg::LF;
    case Leg::LB: return Leg::RB;
    case Leg::RB: return Leg::LB;
  }
  return l;
}

Leg front_back_leg(Leg l) {
  switch (l) {
    case Leg::LF: return Leg::LB;
    case Leg::RF: return Leg::RB;
    case Leg::LB: return Leg::LF;
    case Leg::RB: return Leg::RF;
  }
  return l;
}

const char* keypoint_name(int index) {
  static const char* names[kNumKeypoints] = {
      "left_eye",  "right_eye", "nose",     "withers",  "tail_end", "lf_elbow",
      "lf_knee",   "lf_paw",    "rf_elbow", "rf_knee",  "rf_paw",   "lb_elbow",
      "lb_knee",   "lb_paw",    "rb_elbow", "rb_knee",  "rb_paw"};
  return names[index];
}

std::pair<std::vector<SkeletonFrame>, std::vector<RepairReport>> interpolate_missing(
    const std::vector<SkeletonFrame>& seq) {
  if (seq.empty()) throw ContractError("interpolate_missing: empty sequence");
  for (std::size_t i = 1; i < seq.size(); ++i)
    if (seq[i].frame_index <= seq[i - 1].frame_index)
      throw ContractError("interpolate_missing: frames must be ordered by frame_index");

  std::vector<SkeletonFrame> out = seq;
  std::vector<RepairReport> reports(seq.size());
  const auto n = static_cast<std::ptrdiff_t>(seq.size());

  for (int j = 0; j < kNumKeypoints; ++j) {
    for (std::ptrdiff_t t = 0; t < n; ++t) {
      if (seq[t].points[j].present()) continue;
      std::ptrdiff_t prev = t - 1, next = t + 1;
      while (prev >= 0 && !seq[prev].points[j].present()) --prev;
      while (next < n && !seq[next].points[j].present()) ++next;
      const bool has_prev = prev >= 0, has_next = next < n;
      Keypoint filled;
      if (has_prev && has_next) {
        const Keypoint& a = seq[prev].points[j];
        const Keypoint& b = seq[next].points[j];
        const double t0 = seq[prev].frame_index, t1 = seq[next].frame_index;
        const double tm = seq[t].frame_index;
        // factored so that integer-lattice paths interpolate exactly
        filled.x = a.x + (b.x - a.x) * (tm - t0) / (t1 - t0);
        filled.y = a.y + (b.y - a.y) * (tm - t0) / (t1 - t0);
      } else if (has_prev) {
        filled.x = seq[prev].points[j].x;
        filled.y = seq[prev].points[j].y;
      } else if (has_next) {
        filled.x = seq[next].points[j].x;
        filled.y = seq[next].points[j].y;
      } else {
        continue;  // never visible in the clip
      }
      filled.vis = Vis::inferred;
      out[t].points[j] = filled;
      ++reports[t].interpolated;
    }
  }
  return {std::move(out), std::move(reports)};
}

bool should_discard(const SkeletonFrame& f) {
  if (!f.points[kNeck].present() || !f.points[kTailEnd].present()) return true;
  return f.missing_count() > 9;
}

SkeletonFrame infer_leg_joint(const SkeletonFrame& f, Leg leg) {
  const int ei = leg_elbow(leg), ki = leg_knee(leg), pi = leg_paw(leg);
  const Keypoint &e = f.points[ei], &k = f.points[ki], &p = f.points[pi];
  const int missing = (e.present() ? 0 : 1) + (k.present() ? 0 : 1) + (p.present() ? 0 : 1);
  if (missing != 1)
    throw ContractError("infer_leg_joint: exactly one joint of the leg must be missing, got " +
                        std::to_string(missing));
  SkeletonFrame out = f;
  auto set = [&out](int idx, double x, double y) {
    out.points[idx] = Keypoint{x, y, Vis::inferred};
  };
  if (!k.present()) {
    set(ki, (e.x + p.x) / 2.0, (e.y + p.y) / 2.0);  // knee = midpoint of the chain
  } else if (!e.present()) {
    set(ei, k.x + (k.x - p.x), k.y + (k.y - p.y));  // reflect paw through knee
  } else {
    set(pi, k.x + (k.x - e.x), k.y + (k.y - e.y));  // reflect elbow through knee
  }
  return out;
}

namespace {

// Reflection of p across the line through a with unit direction d.
Keypoint reflect_across(const Keypoint& p, double ax, double ay, double dx, double dy) {
  const double qx = p.x - ax, qy = p.y - ay;
  const double along = qx * dx + qy * dy;
  const double px = along * dx, py = along * dy;  // parallel component
  return Keypoint{ax + 2 * px - qx, ay + 2 * py - qy, Vis::inferred};
}

}  // namespace

SkeletonFrame symmetry_fill(const SkeletonFrame& f, Leg leg, int* filled_out) {
  const Keypoint &neck = f.points[kNeck], &tail = f.points[kTailEnd];
  if (!neck.present() || !tail.present())
    throw ContractError("symmetry_fill: spine landmarks must be visible");

  const double sx = tail.x - neck.x, sy = tail.y - neck.y;
  const double len = std::hypot(sx, sy);
  // with a degenerate spine the mirror axis is undefined; only the
  // front/back translation fallback can fill anything
  const bool spine_ok = len > 1e-9;
  const double dx = spine_ok ? sx / len : 1.0, dy = spine_ok ? sy / len : 0.0;

  const Leg partner = mirror_leg(leg);
  const Leg fallback = front_back_leg(leg);

  // translation anchor for the front/back fallback: elbows first, then knees
  bool have_shift = false;
  double shift_x = 0, shift_y = 0;
  for (auto pick : {&leg_elbow, &leg_knee}) {
    const Keypoint &own = f.points[pick(leg)], &donor = f.points[pick(fallback)];
    if (own.present() && donor.present()) {
      shift_x = own.x - donor.x;
      shift_y = own.y - donor.y;
      have_shift = true;
      break;
    }
  }

  SkeletonFrame out = f;
  int filled = 0;
  for (int joint : {leg_elbow(leg), leg_knee(leg), leg_paw(leg)}) {
    if (f.points[joint].present()) continue;
    const int offset = joint - leg_elbow(leg);
    const Keypoint& mirror_src = f.points[leg_elbow(partner) + offset];
    if (mirror_src.present() && spine_ok) {
      out.points[joint] = reflect_across(mirror_src, neck.x, neck.y, dx, dy);
      ++filled;
      continue;
    }
    const Keypoint& fb_src = f.points[leg_elbow(fallback) + offset];
    if (fb_src.present() && have_shift) {
      out.points[joint] = Keypoint{fb_src.x + shift_x, fb_src.y + shift_y, Vis::inferred};
      ++filled;
    }
    // neither donor exists: the joint stays missing
  }
  if (filled_out) *filled_out = filled;
  return out;
}

RepairResult repair(const std::vector<SkeletonFrame>& seq) {
  if (seq.empty()) throw ContractError("repair: empty clip");

  RepairResult res;
  auto [frames, reports] = interpolate_missing(seq);
  res.frames = std::move(frames);
  res.reports = std::move(reports);

  // rule 2: any bad frame drops the clip
  for (std::size_t t = 0; t < res.frames.size(); ++t) {
    const SkeletonFrame& f = res.frames[t];
    if (!should_discard(f)) continue;
    auto& rep = res.reports[t];
    rep.discarded = true;
    rep.reason = f.missing_count() > 9 ? RepairReport::Reason::too_many_missing
                                       : RepairReport::Reason::spine_missing;
    if (!res.clip_dropped) {
      res.clip_dropped = true;
      res.drop_reason = rep.reason;
    }
  }
  if (res.clip_dropped) return res;

  // rules 3 and 4, in order, per frame
  for (std::size_t t = 0; t < res.frames.size(); ++t) {
    SkeletonFrame& f = res.frames[t];
    for (Leg leg : {Leg::LF, Leg::RF, Leg::LB, Leg::RB}) {
      int missing = 0;
      for (int joint : {leg_elbow(leg), leg_knee(leg), leg_paw(leg)})
        missing += f.points[joint].present() ? 0 : 1;
      if (missing == 1) {
        f = infer_leg_joint(f, leg);
        ++res.reports[t].leg_inferred;
      }
    }
    for (Leg leg : {Leg::LF, Leg::RF, Leg::LB, Leg::RB}) {
      int missing = 0;
      for (int joint : {leg_elbow(leg), leg_knee(leg), leg_paw(leg)})
        missing += f.points[joint].present() ? 0 : 1;
      if (missing >= 2) {
        int filled = 0;
        f = symmetry_fill(f, leg, &filled);
        res.reports[t].symmetry_filled += filled;
      }
    }
  }
  return res;
}

NormalizedFrame normalize(const SkeletonFrame& f) {
  const Keypoint &neck = f.points[kNeck], &tail = f.points[kTailEnd];
  if (!neck.present() || !tail.present())
    throw ContractError("normalize: spine landmarks must be visible");
  const double scale = std::hypot(neck.x - tail.x, neck.y - tail.y);
  if (scale <= 1e-6)
    throw DegeneratePoseError("normalize: neck and tail end coincide (spine length " +
                              std::to_string(scale) + " px)");
  const double rx = (neck.x + tail.x) / 2.0, ry = (neck.y + tail.y) / 2.0;

  NormalizedFrame out;
  out.frame_index = f.frame_index;
  for (int j = 0; j < kNumKeypoints; ++j) {
    const Keypoint& p = f.points[j];
    if (!p.present()) {
      out.points[j] = Keypoint{0.0, 0.0, Vis::missing};
      continue;
    }
    out.points[j] = Keypoint{(p.x - rx) / scale, (p.y - ry) / scale, p.vis};
  }
  return out;
}

std::array<double, 2 * kNumKeypoints> pose_vector(const NormalizedFrame& f) {
  std::array<double, 2 * kNumKeypoints> v{};
  for (int j = 0; j < kNumKeypoints; ++j) {
    if (!f.points[j].present()) continue;  // missing points sit at the root
    v[2 * j] = f.points[j].x;
    v[2 * j + 1] = f.points[j].y;
  }
  return v;
}

}  // namespace dogpain::skel
