#include "leapvo/ba.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

#include "leapvo/errors.hpp"

namespace leapvo {

HuberValue huber(double r, double delta) {
  r = std::abs(r);
  if (r <= delta) return {0.5 * r * r, 1.0};
  return {delta * (r - 0.5 * delta), delta / r};
}

std::vector<int> BAProblem::pose_slots() const {
  std::vector<int> slots(poses.size(), 0);
  for (int f : fixed)
    if (f >= 0 && f < static_cast<int>(poses.size())) slots[static_cast<size_t>(f)] = -1;
  int next = 0;
  for (auto& s : slots) s = s < 0 ? -1 : next++;
  return slots;
}

double robust_cost(const BAProblem& problem, int* masked) {
  double cost = 0.0;
  int skipped = 0;
  for (const auto& o : problem.observations) {
    if (o.weight <= 0.0 || o.host == o.target) continue;
    const Landmark& l = problem.landmarks[static_cast<size_t>(o.landmark)];
    const Reprojection p = reproject(problem.poses[static_cast<size_t>(o.host)],
                                     problem.poses[static_cast<size_t>(o.target)], problem.intrinsics,
                                     l.pixel, l.depth);
    if (!p.in_front) {
      ++skipped;
      continue;
    }
    cost += o.weight * huber((p.pixel - o.measurement).norm(), problem.huber_delta).cost;
  }
  if (masked) *masked = skipped;
  return cost;
}

NormalSystem linearize(const BAProblem& problem) {
  const std::vector<int> slots = problem.pose_slots();
  const int free = static_cast<int>(std::count_if(slots.begin(), slots.end(), [](int s) { return s >= 0; }));
  const auto nl = static_cast<Eigen::Index>(problem.landmarks.size());

  NormalSystem sys;
  sys.h_cc = Eigen::MatrixXd::Zero(6 * free, 6 * free);
  sys.h_cl = Eigen::MatrixXd::Zero(6 * free, nl);
  sys.h_ll = Eigen::VectorXd::Zero(nl);
  sys.b_c = Eigen::VectorXd::Zero(6 * free);
  sys.b_l = Eigen::VectorXd::Zero(nl);

  for (const auto& o : problem.observations) {
    if (o.weight <= 0.0 || o.host == o.target) continue;
    const Landmark& l = problem.landmarks[static_cast<size_t>(o.landmark)];
    ReprojectionJacobians jac;
    const Reprojection p = reproject(problem.poses[static_cast<size_t>(o.host)],
                                     problem.poses[static_cast<size_t>(o.target)], problem.intrinsics,
                                     l.pixel, l.depth, &jac);
    if (!p.in_front) {
      ++sys.masked;
      continue;
    }
    const Vec2 r = p.pixel - o.measurement;
    const HuberValue h = huber(r.norm(), problem.huber_delta);
    sys.cost += o.weight * h.cost;
    const double w = o.weight * h.weight;

    const int si = slots[static_cast<size_t>(o.host)];
    const int sj = slots[static_cast<size_t>(o.target)];
    const auto li = static_cast<Eigen::Index>(o.landmark);
    const Vec2 jd = problem.depth_param == DepthParam::kDepth ? jac.d_depth : Vec2(-l.depth * l.depth * jac.d_depth);

    sys.h_ll[li] += w * jd.squaredNorm();
    sys.b_l[li] -= w * jd.dot(r);

    const int slot[2] = {si, sj};
    const Eigen::Matrix<double, 2, 6>* jacs[2] = {&jac.d_host, &jac.d_target};
    for (int a = 0; a < 2; ++a) {
      if (slot[a] < 0) continue;
      const Eigen::Matrix<double, 6, 2> wt = w * jacs[a]->transpose();
      sys.b_c.segment<6>(6 * slot[a]).noalias() -= wt * r;
      sys.h_cl.block<6, 1>(6 * slot[a], li).noalias() += wt * jd;
      for (int b = 0; b < 2; ++b) {
        if (slot[b] < 0) continue;
        sys.h_cc.block<6, 6>(6 * slot[a], 6 * slot[b]).noalias() += wt * (*jacs[b]);
      }
    }
  }
  return sys;
}

BAIncrement schur_solve(const NormalSystem& system, double lambda) {
  const auto nc = system.h_cc.rows();
  BAIncrement out;
  const double ceiling = std::max(lambda, 1e2) * (1.0 + 1e-9);
  for (double lam = std::max(lambda, 0.0);; lam = lam > 0.0 ? lam * 10.0 : 1e-12) {
    if (lam > ceiling) throw Error(ErrorCode::kSingularSystem, "reduced camera system is singular");
    const Eigen::VectorXd hll = system.h_ll.array() + lam;
    if ((hll.array() <= 0.0).any()) continue;
    const Eigen::VectorXd inv = hll.cwiseInverse();
    Eigen::MatrixXd s = system.h_cc;
    s.diagonal().array() += lam;
    s.noalias() -= system.h_cl * inv.asDiagonal() * system.h_cl.transpose();
    const Eigen::VectorXd rhs = system.b_c - system.h_cl * inv.cwiseProduct(system.b_l);
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(nc);
    if (nc > 0) {
      Eigen::LLT<Eigen::MatrixXd> llt(s);
      if (llt.info() != Eigen::Success) continue;
      dc = llt.solve(rhs);
      if (!dc.allFinite()) continue;
    }
    out.poses = dc;
    out.depths = inv.cwiseProduct(system.b_l - system.h_cl.transpose() * dc);
    out.lambda = lam;
    return out;
  }
}

namespace {

void apply_increment(BAProblem& problem, const std::vector<int>& slots, const std::vector<Pose>& poses,
                     const std::vector<double>& depths, const BAIncrement& inc, double alpha,
                     const BAOptions& options) {
  for (size_t i = 0; i < poses.size(); ++i) {
    problem.poses[i] = slots[i] < 0 ? poses[i] : se3_exp(alpha * inc.poses.segment<6>(6 * slots[i])) * poses[i];
  }
  for (size_t i = 0; i < depths.size(); ++i) {
    const double step = alpha * inc.depths[static_cast<Eigen::Index>(i)];
    double d = depths[i];
    if (problem.depth_param == DepthParam::kDepth) {
      d += step;
    } else {
      const double rho = 1.0 / d + step;
      d = rho > 0.0 ? 1.0 / rho : options.max_depth;
    }
    problem.landmarks[i].depth = std::clamp(d, options.min_depth, options.max_depth);
  }
}

}  // namespace

BAReport ba_optimize(BAProblem& problem, const BAOptions& options) {
  BAReport report;
  const std::vector<int> slots = problem.pose_slots();
  int masked = 0;
  double cost = robust_cost(problem, &masked);
  report.initial_cost = cost;
  double lambda = options.damping;

  for (int it = 0; it < options.iterations; ++it) {
    const NormalSystem sys = linearize(problem);
    const BAIncrement inc = schur_solve(sys, lambda);

    const std::vector<Pose> poses = problem.poses;
    std::vector<double> depths(problem.landmarks.size());
    for (size_t i = 0; i < depths.size(); ++i) depths[i] = problem.landmarks[i].depth;

    // full step first, then a short backtracking search
    bool accepted = false;
    for (int half = 0; half <= options.backtracking && !accepted; ++half) {
      apply_increment(problem, slots, poses, depths, inc, std::ldexp(1.0, -half), options);
      int new_masked = 0;
      const double new_cost = robust_cost(problem, &new_masked);
      if (std::isfinite(new_cost) && new_masked <= masked && new_cost <= cost) {
        cost = new_cost;
        masked = new_masked;
        accepted = true;
      }
    }
    if (accepted) {
      lambda = std::max(options.damping, inc.lambda / 10.0);
      ++report.accepted;
    } else {
      problem.poses = poses;
      for (size_t i = 0; i < depths.size(); ++i) problem.landmarks[i].depth = depths[i];
      lambda = std::min(inc.lambda * 10.0, 1e2);
      ++report.rejected;
    }
  }
  report.final_cost = cost;
  return report;
}

}  // namespace leapvo
