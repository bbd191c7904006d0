#include "leapvo/dynfilter.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>

#include "leapvo/errors.hpp"

namespace leapvo {

int ValidityMask::kept_points() const {
  int n = 0;
  for (const auto& w : weights) n += static_cast<int>(w.sum());
  return n;
}

int ValidityMask::kept_tracks() const {
  return static_cast<int>(std::count(alive.begin(), alive.end(), true));
}

double sampson_distance(const Mat3& f, const Vec2& x1, const Vec2& x2) {
  const Vec3 a = x1.homogeneous();
  const Vec3 b = x2.homogeneous();
  const Vec3 fa = f * a;
  const Vec3 ftb = f.transpose() * b;
  const double e = b.dot(fa);
  const double denom = std::max(fa.head<2>().squaredNorm() + ftb.head<2>().squaredNorm(), 1e-12);
  return std::abs(e) / std::sqrt(denom);
}

namespace {

// Similarity moving the centroid to the origin with mean distance sqrt(2).
Mat3 normaliser(const std::vector<Vec2>& pts) {
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  const double s = dist > 1e-12 ? std::sqrt(2.0) / dist : 1.0;
  Mat3 t;
  t << s, 0.0, -s * mean.x(),
       0.0, s, -s * mean.y(),
       0.0, 0.0, 1.0;
  return t;
}

Mat3 enforce_rank2(const Mat3& f) {
  Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 sv = svd.singularValues();
  sv[2] = 0.0;
  return svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
}

Mat3 canonical(Mat3 f) {
  f /= f.norm();
  Eigen::Index i = 0;
  Eigen::Index j = 0;
  f.cwiseAbs().maxCoeff(&i, &j);
  if (f(i, j) < 0.0) f = -f;
  return f;
}

}  // namespace

Mat3 fit_dominant_motion(const std::vector<Vec2>& x1, const std::vector<Vec2>& x2, int irls_rounds,
                         double cauchy_c, int hypotheses) {
  if (x1.size() != x2.size()) throw Error(ErrorCode::kInvalidArgument, "correspondence count mismatch");
  const size_t n = x1.size();
  if (n < 8) throw Error(ErrorCode::kDegenerateConfiguration, "fewer than 8 correspondences");

  const Mat3 t1 = normaliser(x1);
  const Mat3 t2 = normaliser(x2);
  Eigen::Matrix<double, Eigen::Dynamic, 9> rows(static_cast<Eigen::Index>(n), 9);
  for (size_t i = 0; i < n; ++i) {
    const Vec3 a = t1 * x1[i].homogeneous();
    const Vec3 b = t2 * x2[i].homogeneous();
    rows.row(static_cast<Eigen::Index>(i)) << b.x() * a.x(), b.x() * a.y(), b.x(), b.y() * a.x(), b.y() * a.y(),
        b.y(), a.x(), a.y(), 1.0;
  }

  auto solve = [&](const Eigen::Matrix<double, 9, 9>& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig(m);
    const Eigen::Matrix<double, 9, 1> v = eig.eigenvectors().col(0);
    Mat3 fn;
    fn << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
    return std::make_pair(canonical(t2.transpose() * enforce_rank2(fn) * t1), Eigen::Matrix<double, 9, 1>(eig.eigenvalues()));
  };
  const double trunc = 4.0 * cauchy_c * cauchy_c;
  const size_t scored = std::min<size_t>(n, 128);
  auto robust_cost = [&](const Mat3& f) {
    double c = 0.0;
    for (size_t k = 0; k < scored; ++k) {
      const size_t i = k * n / scored;
      const double d = sampson_distance(f, x1[i], x2[i]);
      c += std::min(d * d, trunc);
    }
    return c;
  };

  // least-squares fit
  Eigen::VectorXd weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  auto [f, ev] = solve(rows.transpose() * rows);
  const double tol = 1e-12 * std::max(ev[8], 1e-300);
  // pure rotation and planar scenes leave a rank-6 design; below that F is unconstrained
  if ((ev.array() > tol).count() < 6)
    throw Error(ErrorCode::kDegenerateConfiguration, "design matrix rank-deficient");

  // minimal samples guard the IRLS start against a least-squares fit dragged by outliers
  double best = robust_cost(f);
  std::mt19937_64 rng(0x5eed + n);
  std::uniform_int_distribution<size_t> pick(0, n - 1);
  for (int h = 0; h < hypotheses; ++h) {
    Eigen::Matrix<double, 8, 9> sample;
    for (int k = 0; k < 8; ++k) sample.row(k) = rows.row(static_cast<Eigen::Index>(pick(rng)));
    const Eigen::FullPivLU<Eigen::Matrix<double, 8, 9>> lu(sample);
    const Eigen::Matrix<double, 9, 1> v = lu.kernel().col(0);
    Mat3 fn;
    fn << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
    if (!fn.allFinite() || fn.norm() == 0.0) continue;
    const Mat3 candidate = canonical(t2.transpose() * enforce_rank2(fn) * t1);
    const double c = robust_cost(candidate);
    if (c < best) {
      best = c;
      f = candidate;
    }
  }

  const Mat3 start = f;
  for (int round = 0; round < irls_rounds; ++round) {
    for (size_t i = 0; i < n; ++i) {
      // algebraic rows scaled to Sampson units, then Cauchy weighted
      const Vec3 fa = f * x1[i].homogeneous();
      const Vec3 ftb = f.transpose() * x2[i].homogeneous();
      const double g2 = std::max(fa.head<2>().squaredNorm() + ftb.head<2>().squaredNorm(), 1e-12);
      const double r = sampson_distance(f, x1[i], x2[i]) / cauchy_c;
      weights[static_cast<Eigen::Index>(i)] = 1.0 / ((1.0 + r * r) * g2);
    }
    f = solve(rows.transpose() * weights.asDiagonal() * rows).first;
  }
  return robust_cost(f) <= best ? f : start;
}

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

DynamicScores score_against(const TrackSet& queries, const std::vector<const Track*>& context,
                            const DynamicScoreConfig& config) {
  DynamicScores out;
  out.scores.assign(queries.size(), 0.5);
  const int frames = queries.num_frames;
  std::map<std::pair<int, int>, std::optional<Mat3>> cache;
  bool any_pair = false;

  std::function<const std::optional<Mat3>&(int, int)> fundamental;
  fundamental = [&](int a, int b) -> const std::optional<Mat3>& {
    auto [it, inserted] = cache.try_emplace({a, b});
    if (!inserted) return it->second;
    // one fit per unordered pair: F(b, a) = F(a, b)^T
    if (a > b) {
      const std::optional<Mat3>& forward = fundamental(b, a);
      if (forward) it->second = forward->transpose();
      return it->second;
    }
    std::vector<Vec2> p1;
    std::vector<Vec2> p2;
    for (const Track* t : context) {
      if (t->visibility[a] >= config.gamma_v && t->visibility[b] >= config.gamma_v) {
        p1.push_back(t->xy.row(a).transpose());
        p2.push_back(t->xy.row(b).transpose());
      }
    }
    if (config.max_fit_points >= 8 && p1.size() > static_cast<size_t>(config.max_fit_points)) {
      const size_t keep = static_cast<size_t>(config.max_fit_points);
      std::vector<Vec2> s1(keep);
      std::vector<Vec2> s2(keep);
      for (size_t i = 0; i < keep; ++i) {
        s1[i] = p1[i * p1.size() / keep];
        s2[i] = p2[i * p2.size() / keep];
      }
      p1.swap(s1);
      p2.swap(s2);
    }
    if (p1.size() >= 8) {
      try {
        it->second = fit_dominant_motion(p1, p2, config.irls_rounds, config.cauchy_c, config.hypotheses);
        any_pair = true;
      } catch (const Error&) {
        // degenerate pair: skipped
      }
    }
    return it->second;
  };

  for (size_t q = 0; q < queries.size(); ++q) {
    const Track& t = queries.tracks[q];
    const int a = queries.row(t.query.frame);
    if (a < 0 || a >= frames || t.visibility[a] < config.gamma_v) continue;
    double sum = 0.0;
    int used = 0;
    for (int b = 0; b < frames; ++b) {
      if (b == a || t.visibility[b] < config.gamma_v) continue;
      const auto& f = fundamental(a, b);
      if (!f) continue;
      sum += sampson_distance(*f, t.xy.row(a).transpose(), t.xy.row(b).transpose());
      ++used;
    }
    if (used > 0) out.scores[q] = logistic((sum / used - config.tau_d) / config.sigma_d);
  }
  if (!any_pair) {
    out.insufficient_anchors = true;
    std::fill(out.scores.begin(), out.scores.end(), 0.5);
  }
  return out;
}

}  // namespace

DynamicScores dynamic_score(const TrackSet& queries, const TrackSet& anchors,
                            const DynamicScoreConfig& config) {
  if (anchors.first_frame != queries.first_frame || anchors.num_frames != queries.num_frames)
    throw Error(ErrorCode::kWindowMismatch, "anchors must be tracked on the query window");
  std::vector<const Track*> context;
  for (const auto& t : queries.tracks) context.push_back(&t);
  if (&anchors != &queries)
    for (const auto& t : anchors.tracks) context.push_back(&t);
  // union in a canonical order, so the fit does not depend on how tracks are labelled
  auto less = [](const Track* a, const Track* b) {
    for (Eigen::Index s = 0; s < a->xy.rows(); ++s) {
      for (int c = 0; c < 2; ++c)
        if (a->xy(s, c) != b->xy(s, c)) return a->xy(s, c) < b->xy(s, c);
      if (a->visibility[s] != b->visibility[s]) return a->visibility[s] < b->visibility[s];
    }
    return false;
  };
  std::stable_sort(context.begin(), context.end(), less);
  context.erase(std::unique(context.begin(), context.end(),
                            [&](const Track* a, const Track* b) { return !less(a, b) && !less(b, a); }),
                context.end());
  return score_against(queries, context, config);
}

void assign_dynamic_scores(TrackSet& tracks, const DynamicScoreConfig& config) {
  const DynamicScores s = dynamic_score(tracks, tracks, config);
  for (size_t i = 0; i < tracks.size(); ++i) tracks.tracks[i].dynamic_score = s.scores[i];
  tracks.insufficient_anchors = s.insufficient_anchors;
}

double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "quantile of an empty set");
  std::sort(values.begin(), values.end());
  q = std::clamp(q, 0.0, 1.0);
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ValidityMask filter_tracks(const TrackSet& tracks, const FilterConfig& config) {
  ValidityMask mask;
  const int frames = tracks.num_frames;
  std::vector<Eigen::VectorXd> phi;
  std::vector<double> pool;
  for (const auto& t : tracks.tracks) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(frames);
    phi.push_back(t.uncertainty());
    for (int s = 0; s < frames; ++s) {
      if (t.visibility[s] >= config.gamma_v && t.dynamic_score < config.gamma_d) {
        w[s] = 1.0;
        pool.push_back(phi.back()[s]);
      }
    }
    mask.weights.push_back(std::move(w));
  }
  const double cut = pool.empty() ? 0.0 : empirical_quantile(pool, config.gamma_u);
  for (size_t i = 0; i < tracks.size(); ++i) {
    Eigen::VectorXd& w = mask.weights[i];
    for (int s = 0; s < frames; ++s)
      if (w[s] > 0.0 && phi[i][s] > cut) w[s] = 0.0;
    const bool alive = w.sum() >= config.gamma_track;
    if (!alive) w.setZero();
    mask.alive.push_back(alive);
  }
  return mask;
}

}  // namespace leapvo
