#pragma once

// Marker-based inverse kinematics: per-frame joint values and shared marker
// attachments fitted together by descent on the mean marker distance, with
// analytic gradients through the kinematic chain. The descent direction is
// the gradient preconditioned by reweighted Gauss-Newton curvature.

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "musculo/common.hpp"
#include "musculo/kinematics.hpp"
#include "musculo/mocap.hpp"
#include "musculo/model.hpp"
#include "musculo/parallel.hpp"
#include "musculo/rng.hpp"
#include "musculo/trajectory.hpp"

namespace musculo {

struct IkOptions {
  double regularizer_weight = 1e-2;
  int iterations = 500;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  double init_noise = 0.0;  // rad, uniform jitter of the initial angles
  int max_halvings = 20;
  int patience = 10;  // consecutive failed line searches before giving up
  int threads = 0;
};

// Parameters being fitted.
struct IkParams {
  MatX attachments;        // markers x 3, body-frame offsets
  std::vector<MatX> poses;  // per clip: frames x joints
};

struct IkResult {
  std::vector<MarkerSpec> attachments;
  std::vector<Trajectory> trajectories;
  double loss = 0.0;
  std::vector<double> history;  // loss after every accepted step, starting with the initial loss
  int iterations = 0;
  long range_violations = 0;  // angles clamped to their joint range after the fit
};

struct IkProblem {
  const Model* model = nullptr;
  std::vector<Clip> clips;
  std::vector<int> marker_of;  // clip marker column -> model marker, per clip (shared layout)
  double regularizer_weight = 0.0;

  IkProblem(const Model& m, const std::vector<Clip>& c, double weight) : model(&m), clips(c), regularizer_weight(weight) {
    if (clips.empty()) throw DataError("ik: no clips");
    for (const auto& clip : clips) {
      clip.validate();
      if (clip.markers != clips.front().markers) throw DataError("ik: clips must share one marker layout");
      if (clip.frames() == 0) throw DataError("ik: empty clip");
    }
    for (const auto& name : clips.front().markers) marker_of.push_back(m.marker_index(name));
  }

  long observation_count() const {
    long n = 0;
    for (const auto& c : clips) n += c.mask.count();
    return n;
  }

  long frame_count() const {
    long n = 0;
    for (const auto& c : clips) n += c.frames();
    return n;
  }

  IkParams initial_params() const {
    IkParams p;
    p.attachments.resize(static_cast<Eigen::Index>(model->markers.size()), 3);
    for (std::size_t k = 0; k < model->markers.size(); ++k) p.attachments.row(k) = model->markers[k].offset.transpose();
    for (const auto& c : clips) {
      MatX q(c.frames(), model->joint_count());
      for (int t = 0; t < c.frames(); ++t) q.row(t) = model->default_positions().transpose();
      p.poses.push_back(q);
    }
    return p;
  }

  // Loss, and if `grad` is given its gradient with the same layout as the
  // parameters. Per-frame work is independent; attachment contributions are
  // kept per frame and summed in frame order.
  double evaluate(const IkParams& p, IkParams* grad, int threads = 1) const {
    const int nj = model->joint_count();
    const double inv_n = 1.0 / static_cast<double>(observation_count());
    const double inv_f = 1.0 / static_cast<double>(frame_count());
    std::vector<int> anchored;
    for (int j = 0; j < nj; ++j) {
      if (model->joints[j].ik_anchor) anchored.push_back(j);
    }
    if (grad) {
      grad->attachments = MatX::Zero(p.attachments.rows(), 3);
      grad->poses.clear();
      for (const auto& q : p.poses) grad->poses.push_back(MatX::Zero(q.rows(), q.cols()));
    }
    double total = 0.0;
    for (std::size_t ci = 0; ci < clips.size(); ++ci) {
      const Clip& clip = clips[ci];
      const int nf = clip.frames();
      std::vector<double> frame_loss(nf, 0.0);
      std::vector<MatX> frame_att(grad ? nf : 0);
      parallel_for(nf, threads, [&](int begin, int end) {
        for (int t = begin; t < end; ++t) {
          const VecX q = p.poses[ci].row(t).transpose();
          const FrameSet f = forward_kinematics(*model, q);
          double loss = 0.0;
          if (grad) frame_att[t] = MatX::Zero(p.attachments.rows(), 3);
          for (int c = 0; c < clip.marker_count(); ++c) {
            if (!clip.mask(t, c)) continue;
            const int mk = marker_of[c];
            const int b = model->markers[mk].body;
            const Vec3 o = p.attachments.row(mk).transpose();
            const Vec3 pos = f.body_position[b] + f.body_rotation[b] * o;
            const Vec3 e = pos - clip.point(t, c);
            const double d = e.norm();
            loss += d * inv_n;
            if (!grad || d == 0.0) continue;
            const Vec3 g = e / d * inv_n;
            for (int j : model->chain[b]) {
              const Vec3& a = f.joint_axis[j];
              const Vec3 dp = model->joints[j].kind == JointKind::hinge ? Vec3(a.cross(pos - f.joint_anchor[j])) : a;
              grad->poses[ci](t, j) += g.dot(dp);
            }
            frame_att[t].row(mk) += (f.body_rotation[b].transpose() * g).transpose();
          }
          for (int j : anchored) {
            const double dq = q[j] - *model->joints[j].ik_anchor;
            loss += regularizer_weight * inv_f * dq * dq;
            if (grad) grad->poses[ci](t, j) += 2.0 * regularizer_weight * inv_f * dq;
          }
          frame_loss[t] = loss;
        }
      });
      for (int t = 0; t < nf; ++t) {
        total += frame_loss[t];
        if (grad) grad->attachments += frame_att[t];
      }
    }
    return total;
  }

  struct Step {
    double loss = 0.0;
    IkParams grad;
    IkParams direction;
  };

  // Loss, gradient and the direction -H^-1 g, where H sums w J'J over all
  // samples with w = 1 / (n d): the Gauss-Newton matrix of the reweighted
  // least-squares form of the distance loss. Frames couple only through the
  // attachments, so their blocks are eliminated and the system is solved on
  // the attachments alone. A relative damping of 1e-10 keeps H definite
  // along motions that leave every marker in place.
  Step newton_step(const IkParams& p, int threads = 1) const {
    const int nj = model->joint_count();
    const int na = static_cast<int>(p.attachments.rows()) * 3;
    const double inv_n = 1.0 / static_cast<double>(observation_count());
    const double inv_f = 1.0 / static_cast<double>(frame_count());
    std::vector<int> anchored;
    for (int j = 0; j < nj; ++j) {
      if (model->joints[j].ik_anchor) anchored.push_back(j);
    }
    struct Frame {
      int clip = 0, t = 0;
      double loss = 0.0;
      VecX g, ga, haa, e;
      MatX d, b, c;
    };
    std::vector<Frame> frames;
    for (std::size_t ci = 0; ci < clips.size(); ++ci) {
      for (int t = 0; t < clips[ci].frames(); ++t) frames.push_back({static_cast<int>(ci), t});
    }
    const int nf = static_cast<int>(frames.size());
    parallel_for(nf, threads, [&](int begin, int end) {
      for (int i = begin; i < end; ++i) {
        Frame& fr = frames[i];
        const Clip& clip = clips[fr.clip];
        const VecX q = p.poses[fr.clip].row(fr.t).transpose();
        const FrameSet f = forward_kinematics(*model, q);
        fr.g = VecX::Zero(nj);
        fr.ga = VecX::Zero(na);
        fr.haa = VecX::Zero(na);
        fr.d = MatX::Zero(nj, nj);
        fr.b = MatX::Zero(na, nj);
        Eigen::Matrix<double, 3, Eigen::Dynamic> jq(3, nj);
        for (int c = 0; c < clip.marker_count(); ++c) {
          if (!clip.mask(fr.t, c)) continue;
          const int mk = marker_of[c];
          const int b = model->markers[mk].body;
          const Mat3& rot = f.body_rotation[b];
          const Vec3 pos = f.body_position[b] + rot * p.attachments.row(mk).transpose();
          const Vec3 e = pos - clip.point(fr.t, c);
          const double dist = e.norm();
          fr.loss += dist * inv_n;
          // Floor keeps the weight finite for a sample that is already exact.
          const double w = inv_n / std::max(dist, 1e-10);
          jq.setZero();
          for (int j : model->chain[b]) {
            const Vec3& a = f.joint_axis[j];
            jq.col(j) = model->joints[j].kind == JointKind::hinge ? Vec3(a.cross(pos - f.joint_anchor[j])) : a;
          }
          if (dist > 0.0) {
            fr.g += (inv_n / dist) * (jq.transpose() * e);
            fr.ga.segment<3>(3 * mk) += (inv_n / dist) * (rot.transpose() * e);
          }
          fr.d += w * jq.transpose() * jq;
          fr.b.middleRows<3>(3 * mk) += w * rot.transpose() * jq;
          fr.haa.segment<3>(3 * mk).array() += w;
        }
        for (int j : anchored) {
          const double dq = q[j] - *model->joints[j].ik_anchor;
          fr.loss += regularizer_weight * inv_f * dq * dq;
          fr.g[j] += 2.0 * regularizer_weight * inv_f * dq;
          fr.d(j, j) += 2.0 * regularizer_weight * inv_f;
        }
      }
    });
    VecX haa = VecX::Zero(na);
    double scale = 0.0;
    for (const Frame& fr : frames) {
      haa += fr.haa;
      if (nj > 0) scale = std::max(scale, fr.d.diagonal().maxCoeff());
    }
    if (na > 0) scale = std::max(scale, haa.maxCoeff());
    const double mu = scale > 0.0 ? 1e-10 * scale : 1.0;
    parallel_for(nf, threads, [&](int begin, int end) {
      for (int i = begin; i < end; ++i) {
        Frame& fr = frames[i];
        const Eigen::LDLT<MatX> ldlt(fr.d + mu * MatX::Identity(nj, nj));
        fr.c = ldlt.solve(MatX(fr.b.transpose()));
        fr.e = ldlt.solve(fr.g);
      }
    });
    Step out;
    out.grad.attachments = MatX::Zero(p.attachments.rows(), 3);
    MatX schur = MatX::Zero(na, na);
    schur.diagonal() = haa.array() + mu;
    VecX ga = VecX::Zero(na), rhs = VecX::Zero(na);
    for (const Frame& fr : frames) {
      out.loss += fr.loss;
      ga += fr.ga;
      rhs += fr.ga - fr.b * fr.e;
      schur -= fr.b * fr.c;
    }
    const VecX da = na > 0 ? VecX(-schur.ldlt().solve(rhs)) : VecX();
    out.direction.attachments = MatX::Zero(p.attachments.rows(), 3);
    for (int k = 0; k < na; ++k) {
      out.grad.attachments(k / 3, k % 3) = ga[k];
      out.direction.attachments(k / 3, k % 3) = da[k];
    }
    for (const auto& q : p.poses) {
      out.grad.poses.push_back(MatX::Zero(q.rows(), q.cols()));
      out.direction.poses.push_back(MatX::Zero(q.rows(), q.cols()));
    }
    for (const Frame& fr : frames) {
      out.grad.poses[fr.clip].row(fr.t) = fr.g.transpose();
      const VecX dq = na > 0 ? VecX(-fr.e - fr.c * da) : VecX(-fr.e);
      out.direction.poses[fr.clip].row(fr.t) = dq.transpose();
    }
    return out;
  }
};

// Mean marker error (m) below which the fit counts as exact.
inline constexpr double kIkLossFloor = 1e-14;

namespace detail {

inline IkParams ik_axpy(const IkParams& p, double step, const IkParams& dir) {
  IkParams out = p;
  out.attachments += step * dir.attachments;
  for (std::size_t c = 0; c < p.poses.size(); ++c) out.poses[c] += step * dir.poses[c];
  return out;
}

inline double ik_norm(const IkParams& g) {
  double s = g.attachments.squaredNorm();
  for (const auto& q : g.poses) s += q.squaredNorm();
  return std::sqrt(s);
}

}  // namespace detail

// Descent with backtracking: each iteration tries the current step along
// the preconditioned direction, halving up to `max_halvings` times until
// the loss decreases; an accepted step doubles the next trial step, capped
// at the full Gauss-Newton step of 1.
inline IkResult ik_fit(const std::vector<Clip>& clips, const Model& model, const IkOptions& opt = {},
                       const IkParams* init = nullptr) {
  IkProblem prob(model, clips, opt.regularizer_weight);
  IkParams p = init ? *init : prob.initial_params();
  if (opt.init_noise > 0.0) {
    Rng rng = Rng(opt.seed).split("ik-init");
    for (auto& q : p.poses) {
      for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] += rng.uniform(-opt.init_noise, opt.init_noise);
    }
  }
  const int threads = resolve_threads(opt.threads);
  IkResult res;
  IkProblem::Step st = prob.newton_step(p, threads);
  double loss = st.loss;
  if (!std::isfinite(loss)) throw DivergenceError("ik loss", "non-finite initial loss");
  res.history.push_back(loss);
  double step = opt.learning_rate;
  int failures = 0;
  for (int it = 0; it < opt.iterations; ++it) {
    if (loss <= kIkLossFloor || detail::ik_norm(st.grad) == 0.0) break;
    bool accepted = false;
    double trial = std::min(step, 1.0);
    double trial_loss = loss;
    IkParams candidate;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      candidate = detail::ik_axpy(p, trial, st.direction);
      trial_loss = prob.evaluate(candidate, nullptr, threads);
      if (!std::isfinite(trial_loss)) {
        trial *= 0.5;
        continue;
      }
      if (trial_loss < loss) {
        accepted = true;
        break;
      }
      trial *= 0.5;
    }
    res.iterations = it + 1;
    if (!accepted) {
      // No decrease even at the smallest step. If the loss does not move
      // at that resolution the fit has converged; otherwise keep shrinking.
      if (std::abs(trial_loss - loss) <= 1e-12 * loss) break;
      if (++failures >= opt.patience) {
        throw DivergenceError("ik loss", "no descent in " + std::to_string(failures) +
                                             " consecutive iterations; loss " + std::to_string(loss) +
                                             ", last trial " + std::to_string(trial_loss) + ", step " +
                                             std::to_string(trial));
      }
      step = trial;
      continue;
    }
    failures = 0;
    p = std::move(candidate);
    st = prob.newton_step(p, threads);
    loss = st.loss;
    res.history.push_back(loss);
    step = 2.0 * trial;
  }
  res.loss = loss;
  for (std::size_t k = 0; k < model.markers.size(); ++k) {
    MarkerSpec s = model.markers[k];
    s.offset = p.attachments.row(static_cast<Eigen::Index>(k)).transpose();
    res.attachments.push_back(s);
  }
  for (std::size_t c = 0; c < clips.size(); ++c) {
    Trajectory t = Trajectory::for_model(model, clips[c].frames(), clips[c].rate);
    for (int f = 0; f < t.frames(); ++f) {
      for (int j = 0; j < model.joint_count(); ++j) {
        const double v = p.poses[c](f, j);
        const double cl = model.joints[j].clamp(v);
        if (cl != v) ++res.range_violations;
        t.q(f, j) = cl;
      }
    }
    res.trajectories.push_back(t.frames() >= 2 ? infer_velocities(t) : t);
  }
  return res;
}

}  // namespace musculo
