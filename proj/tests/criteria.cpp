#include "criteria.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "lidarbg/detect.hpp"
#include "lidarbg/dpgmm.hpp"
#include "lidarbg/evaluate.hpp"
#include "lidarbg/tracker.hpp"
#include "oracles.hpp"

namespace checks {

using namespace lidarbg;

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

double max_abs(const Mat3& a, const Mat3& b) { return (a - b).cwiseAbs().maxCoeff(); }
double max_abs(const Vec3& a, const Vec3& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

Outcome metric_formulas() {
  double worst = 0.0;
  ConfusionCounts c;
  c.tp = 8;
  c.fp = 2;
  c.fn = 1;
  c.tn = 89;
  const auto m = metrics_from_counts(c);
  worst = std::max({std::abs(m.accuracy - 0.97), std::abs(m.precision - 0.8), std::abs(m.recall - 0.8889),
                    std::abs(m.f1 - 0.8421)});
  const bool metrics_ok = worst <= 1e-4;

  struct Row {
    double video, lidar, printed_pct;
  };
  const Row rows[] = {{211, 223, 94.31}, {221, 204, 92.31}, {86, 82, 95.35}, {92, 88, 95.65}};
  double worst_pp = 0.0;
  for (const auto& r : rows) {
    const double pct = 100.0 * path_count_accuracy(r.video, r.lidar);
    worst_pp = std::max(worst_pp, std::abs(pct - r.printed_pct));
  }
  // Printed values carry two decimals, so rounding alone can differ by 0.005 pp.
  const bool paths_ok = worst_pp <= 0.01;
  return {metrics_ok && paths_ok,
          "max metric error " + fmt(worst) + " (tol 1e-4), max path accuracy error " + fmt(worst_pp) + " pp (tol 0.01)"};
}

Outcome weighted_replication(int cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> n_pre(0, 25), n_centers(1, 3), pick_m(0, 2), pick_w(1, 4);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int ms[] = {2, 3, 5};

  double worst = 0.0;
  double textbook = 0.0;
  int structural = 0;
  for (int k = 0; k < cases; ++k) {
    DPGMMOptions opt;
    opt.alpha = 0.2 + 2.0 * (u(rng) + 1.0);
    opt.prior.kappa0 = 0.05 + 0.5 * (u(rng) + 1.0);
    opt.prior.nu0 = 4.0 + 3.0 * (u(rng) + 1.0);
    opt.prior.psi0 = (0.02 + 0.1 * (u(rng) + 1.0)) * Mat3::Identity();
    opt.prior_mean_weight = 1.0 + 10.0 * (u(rng) + 1.0);
    opt.table_cap = 64;
    opt.keep_history = true;
    GridDPGMM base(opt);

    std::vector<Vec3> centers;
    for (int c = n_centers(rng); c > 0; --c) centers.emplace_back(20.0 * u(rng), 20.0 * u(rng), 3.0 * u(rng));
    const double spread = 0.02 + 0.3 * (u(rng) + 1.0);
    auto draw = [&] {
      const auto& c = centers[static_cast<std::size_t>(std::abs(static_cast<int>(rng() % centers.size())))];
      return Vec3(c + spread * Vec3(noise(rng), noise(rng), noise(rng)));
    };
    for (int i = n_pre(rng); i > 0; --i) {
      base.update(CellObservation::at(draw(), 10.0), static_cast<double>(pick_w(rng)), 0);
    }
    const Vec3 x = u(rng) > 0.3 ? draw() : Vec3(30.0 * u(rng), 30.0 * u(rng), 5.0 * u(rng));
    const int m = ms[pick_m(rng)];

    GridDPGMM weighted = base;
    GridDPGMM repeated = base;
    weighted.update(CellObservation::at(x, 10.0), static_cast<double>(m), 1);
    for (int i = 0; i < m; ++i) repeated.update(CellObservation::at(x, 10.0), 1.0, 1);

    if (weighted.tables().size() != repeated.tables().size()) {
      ++structural;
      continue;
    }
    worst = std::max(worst, max_abs(weighted.prior().mu0, repeated.prior().mu0));
    worst = std::max(worst, std::abs(weighted.total_weight() - repeated.total_weight()));
    for (std::size_t t = 0; t < weighted.tables().size(); ++t) {
      const auto a = weighted.table_posterior(t);
      const auto b = repeated.table_posterior(t);
      worst = std::max({worst, std::abs(a.kappa - b.kappa), std::abs(a.nu - b.nu), max_abs(a.mu, b.mu),
                        max_abs(a.psi, b.psi),
                        std::abs(weighted.tables()[t].weight() - repeated.tables()[t].weight())});

      // Textbook unit recursion over the table's points, each repeated by its integer weight.
      std::vector<Vec3> members;
      for (const auto& h : weighted.history()) {
        if (h.table_id != weighted.tables()[t].id) continue;
        for (int r = static_cast<int>(std::lround(h.weight)); r > 0; --r) members.push_back(h.x);
      }
      const auto ref = oracle::niw_sequential(weighted.prior(), members);
      textbook = std::max({textbook, std::abs(a.kappa - ref.kappa), std::abs(a.nu - ref.nu), max_abs(a.mu, ref.mu),
                           max_abs(a.psi, ref.psi)});
    }
  }
  return {structural == 0 && worst <= 1e-9 && textbook <= 1e-9,
          std::to_string(cases) + " cases, max posterior difference " + fmt(worst) + ", vs textbook recursion " +
              fmt(textbook) + " (tol 1e-9), " + std::to_string(structural) + " differing table layouts"};
}

Outcome stick_breaking_and_occupation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> beta(1e-3, 1.0 - 1e-3);
  double telescoping = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> b(1 + trial % 12);
    for (auto& v : b) v = beta(rng);
    const auto sb = stick_breaking(b);
    double sum = 0.0, prod = 1.0;
    for (double p : sb.proportions) sum += p;
    for (double v : b) prod *= 1.0 - v;
    telescoping = std::max({telescoping, std::abs(sum + sb.remainder - 1.0), std::abs(sb.remainder - prod)});
  }

  double pmf_sum = 0.0;
  double pmf_oracle = 0.0;
  for (int K = 1; K <= 3; ++K) {
    for (int n = 0; n <= 6; ++n) {
      for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> pi(static_cast<std::size_t>(K));
        double total = 0.0;
        for (auto& p : pi) total += (p = beta(rng));
        for (auto& p : pi) p /= total;
        double s = 0.0;
        std::vector<int> counts(static_cast<std::size_t>(K), 0);
        // Enumerate every count vector of length K summing to n.
        const auto visit = [&](auto&& self, std::size_t pos, int left) -> void {
          if (pos + 1 == counts.size()) {
            counts[pos] = left;
            const double p = occupation_pmf(counts, pi);
            pmf_oracle = std::max(pmf_oracle, std::abs(p - oracle::multinomial(counts, pi)));
            s += p;
            return;
          }
          for (int c = 0; c <= left; ++c) {
            counts[pos] = c;
            self(self, pos + 1, left - c);
          }
        };
        visit(visit, 0, n);
        pmf_sum = std::max(pmf_sum, std::abs(s - 1.0));
      }
    }
  }
  const double tol = 1e-12;
  return {telescoping <= tol && pmf_sum <= tol && pmf_oracle <= tol,
          "telescoping error " + fmt(telescoping) + ", pmf normalization error " + fmt(pmf_sum) +
              ", pmf vs direct product " + fmt(pmf_oracle) + " (tol 1e-12)"};
}

Outcome predictive_density(std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  // Mass of three predictives built from small tables.
  double worst_mass = 0.0;
  double worst_pdf = 0.0;
  for (int c = 0; c < 3; ++c) {
    NIWPrior prior;
    prior.mu0 = Vec3(5.0, -3.0, 1.0);
    WeightedStats stats;
    Mat3 shape;
    shape << 0.3, 0.1, 0.0, 0.0, 0.2, 0.05, 0.0, 0.0, 0.1;
    for (int i = 0; i < 4 + 6 * c; ++i) stats.add(prior.mu0 + shape * Vec3(z(rng), z(rng), z(rng)), 1.0 + c);
    const auto pred = predictive(posterior(prior, stats));

    const double dof = pred.dof();
    Vec3 half;
    for (int a = 0; a < 3; ++a) half[a] = 5.0 * std::sqrt(pred.scale()(a, a) * dof / (dof - 2.0));
    const Vec3 lo = pred.location() - half;
    const double volume = 8.0 * half.prod();
    double acc = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
      const Vec3 x = lo + 2.0 * Vec3(u(rng) * half.x(), u(rng) * half.y(), u(rng) * half.z());
      acc += pred.pdf(x);
      if (s < 200) {
        const double ref = oracle::student_t_pdf(
            x, pred.location(), pred.scale() + kCovarianceJitter * Mat3::Identity(), dof);
        if (ref > 1e-300) worst_pdf = std::max(worst_pdf, std::abs(pred.pdf(x) - ref) / ref);
      }
    }
    worst_mass = std::max(worst_mass, std::abs(volume * acc / static_cast<double>(samples) - 1.0));
  }

  // Gaussian limit: 10^4 tight points.
  NIWPrior prior;
  WeightedStats stats;
  const Vec3 mean(12.0, 4.0, -2.0);
  Mat3 chol;
  chol << 0.5, 0.0, 0.0, 0.1, 0.4, 0.0, 0.05, -0.05, 0.3;
  std::vector<Vec3> pts;
  for (int i = 0; i < 10000; ++i) pts.push_back(mean + chol * Vec3(z(rng), z(rng), z(rng)));
  prior.mu0 = pts.front();
  for (const auto& p : pts) stats.add(p, 1.0);
  const auto pred = predictive(posterior(prior, stats));
  Vec3 xbar = Vec3::Zero();
  for (const auto& p : pts) xbar += p;
  xbar /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - xbar) * (p - xbar).transpose();
  cov /= static_cast<double>(pts.size());
  double worst_rel = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Vec3 x = xbar + chol * Vec3(z(rng), z(rng), z(rng)) * 0.7;
    const double g = oracle::gaussian_pdf(x, xbar, cov);
    worst_rel = std::max(worst_rel, std::abs(pred.pdf(x) - g) / g);
  }

  return {worst_mass <= 1e-2 && worst_rel <= 1e-3 && worst_pdf <= 1e-9,
          "max |mass - 1| " + fmt(worst_mass) + " (tol 1e-2, " + std::to_string(samples) +
              " samples), Gaussian limit rel error " + fmt(worst_rel) + " (tol 1e-3), density vs closed form " +
              fmt(worst_pdf)};
}

Outcome tracker_lifecycle() {
  std::vector<std::string> failures;
  auto det_at = [](double x) {
    Detection d;
    d.box.center = Vec3(x, 0.0, -4.0);
    d.box.length = 4.5;
    d.box.width = 1.8;
    d.box.height = 1.5;
    d.object_class = ObjectClass::Car;
    return d;
  };
  const double dt = 0.1;
  const double v = 10.0;

  // Straight line: Candidate on frames 1-5, Confirmed on frame 6.
  {
    Tracker tr;
    for (int f = 1; f <= 6; ++f) {
      const std::vector<Detection> dets{det_at(v * dt * f)};
      tr.step(dets, dt);
      if (tr.tracks().size() != 1) {
        failures.push_back("frame " + std::to_string(f) + ": expected one track");
        break;
      }
      const auto want = f < 6 ? TrackStatus::Candidate : TrackStatus::Confirmed;
      if (tr.tracks()[0].status != want) failures.push_back("frame " + std::to_string(f) + ": wrong status");
    }
    // Then seven misses: still alive after six, deleted on the seventh.
    for (int miss = 1; miss <= 7; ++miss) {
      tr.step({}, dt);
      if (tr.tracks().size() != 1) {
        failures.push_back("miss " + std::to_string(miss) + ": track dropped early");
        break;
      }
      const auto want = miss < 7 ? TrackStatus::Confirmed : TrackStatus::Deleted;
      if (tr.tracks()[0].status != want) failures.push_back("miss " + std::to_string(miss) + ": wrong status");
    }
    tr.step({}, dt);
    if (!tr.tracks().empty()) failures.push_back("deleted track still reported a frame later");
  }

  // A gap resets the consecutive run: hits 1-3, miss 4, hits 5-10 confirm on 10.
  {
    Tracker tr;
    int confirmed_at = -1;
    for (int f = 1; f <= 11; ++f) {
      std::vector<Detection> dets;
      if (f != 4) dets.push_back(det_at(v * dt * f));
      tr.step(dets, dt);
      if (confirmed_at < 0 && !tr.tracks().empty() && tr.tracks()[0].status == TrackStatus::Confirmed) confirmed_at = f;
    }
    if (confirmed_at != 10) failures.push_back("gap scenario confirmed at frame " + std::to_string(confirmed_at));
  }

  // Interleaved misses: 6 hits, then M M M H M M M M. The seventh miss in the
  // last eight frames lands on the final frame.
  {
    Tracker tr;
    double x = 0.0;
    for (int f = 1; f <= 6; ++f) {
      x += v * dt;
      tr.step(std::vector<Detection>{det_at(x)}, dt);
    }
    const bool pattern[] = {false, false, false, true, false, false, false, false};
    for (std::size_t i = 0; i < 8; ++i) {
      x += v * dt;
      std::vector<Detection> dets;
      if (pattern[i]) dets.push_back(det_at(x));
      tr.step(dets, dt);
      const auto want = i < 7 ? TrackStatus::Confirmed : TrackStatus::Deleted;
      if (tr.tracks().size() != 1 || tr.tracks()[0].status != want) {
        failures.push_back("interleaved step " + std::to_string(i + 1) + ": wrong status");
      }
    }
  }

  // Two targets on crossing paths, never closer than twice the gate.
  {
    Tracker tr;
    std::uint64_t id_a = 0, id_b = 0;
    for (int f = 0; f < 40; ++f) {
      const double t = dt * f;
      Detection a = det_at(-20.0 + v * t);
      Detection b = det_at(0.0);
      b.box.center = Vec3(0.0, -8.0 + v * t, -4.0);
      a.box.center.y() = 0.0;
      const auto res = tr.step(std::vector<Detection>{a, b}, dt);
      if (f == 0) {
        id_a = static_cast<std::uint64_t>(res.detection_track[0]);
        id_b = static_cast<std::uint64_t>(res.detection_track[1]);
      } else if (static_cast<std::uint64_t>(res.detection_track[0]) != id_a ||
                 static_cast<std::uint64_t>(res.detection_track[1]) != id_b) {
        failures.push_back("crossing targets swapped identities at frame " + std::to_string(f));
        break;
      }
    }
  }

  std::string detail = failures.empty() ? "confirm on hit 6, delete on miss 7 of 8, gap reset, crossing ids kept"
                                        : failures.front();
  if (failures.size() > 1) detail += " (+" + std::to_string(failures.size() - 1) + " more)";
  return {failures.empty(), detail};
}

Outcome oracle_suites(int rounds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  int dbscan_bad = 0, lof_bad = 0, fence_bad = 0, match_bad = 0;
  std::size_t fence_points = 0;

  for (int r = 0; r < rounds; ++r) {
    // DBSCAN on blobs plus scatter, with and without range scaling.
    {
      std::vector<Vec3> pts;
      const int blobs = 1 + r % 4;
      for (int b = 0; b < blobs; ++b) {
        const Vec3 c(60.0 * u(rng) - 30.0, 60.0 * u(rng) - 30.0, 0.0);
        const int n = 5 + static_cast<int>(40 * u(rng));
        for (int i = 0; i < n; ++i) pts.push_back(c + Vec3(z(rng), z(rng), 0.3 * z(rng)) * (0.2 + u(rng)));
      }
      for (int i = 0; i < 20; ++i) pts.emplace_back(80.0 * u(rng) - 40.0, 80.0 * u(rng) - 40.0, u(rng));
      DbscanOptions o;
      o.eps = 0.3 + u(rng);
      o.min_pts = 2 + static_cast<std::size_t>(6 * u(rng));
      o.range_scale_reference_m = r % 2 ? 15.0 : 0.0;
      const auto got = dbscan(pts, o);
      const auto want = oracle::dbscan(pts, o);
      if (got.clusters != want.clusters || got.noise != want.noise) ++dbscan_bad;
    }
    // LOF on a cluster with a few stray points.
    {
      std::vector<Vec3> pts;
      const int n = 8 + static_cast<int>(60 * u(rng));
      for (int i = 0; i < n; ++i) pts.emplace_back(z(rng), z(rng), 0.5 * z(rng));
      for (int i = 0; i < 3; ++i) pts.emplace_back(8.0 * z(rng), 8.0 * z(rng), z(rng));
      const std::size_t k = 3 + static_cast<std::size_t>(8 * u(rng));
      const auto got = lof_scores(pts, k);
      const auto want = oracle::lof(pts, k);
      LofOptions lo{k, 1.5};
      std::vector<std::size_t> kept_want;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (!(want[i] > lo.threshold)) kept_want.push_back(i);
      }
      bool ok = lof_filter(pts, lo) == kept_want;
      for (std::size_t i = 0; i < pts.size(); ++i) ok = ok && std::abs(got[i] - want[i]) <= 1e-9 * std::max(1.0, want[i]);
      if (!ok) ++lof_bad;
    }
    // Geofence: star-shaped include and exclude polygons against ray casting.
    {
      auto star = [&](Vec2 c, double rmin, double rmax, FenceMode mode) {
        GeofencePolygon p;
        p.mode = mode;
        const int n = 3 + static_cast<int>(7 * u(rng));
        std::vector<double> ang;
        for (int i = 0; i < n; ++i) ang.push_back(2.0 * std::numbers::pi * u(rng));
        std::sort(ang.begin(), ang.end());
        for (double a : ang) {
          const double rr = rmin + (rmax - rmin) * u(rng);
          p.vertices.push_back(c + rr * Vec2(std::cos(a), std::sin(a)));
        }
        return p;
      };
      std::vector<GeofencePolygon> polys{star(Vec2(0, 0), 5.0, 12.0, FenceMode::Include),
                                         star(Vec2(1, 1), 1.0, 4.0, FenceMode::Exclude)};
      if (r % 3 == 0) polys.push_back(star(Vec2(15, 0), 2.0, 6.0, FenceMode::Include));
      bool valid = true;
      for (const auto& p : polys) {
        try {
          p.validate();
        } catch (...) {
          valid = false;
        }
      }
      if (valid) {
        std::vector<Vec3> pts;
        for (double x = -20.0; x <= 25.0; x += 0.37) {
          for (double y = -15.0; y <= 15.0; y += 0.41) pts.emplace_back(x, y, 0.0);
        }
        const auto kept = geofence_filter(pts, polys);
        std::vector<std::size_t> want;
        for (std::size_t i = 0; i < pts.size(); ++i) {
          if (oracle::geofence_keeps(pts[i].head<2>(), polys)) want.push_back(i);
        }
        fence_points += pts.size();
        if (kept != want) ++fence_bad;
      }
    }
    // Matching: well-separated sites so the greedy choice is optimal.
    {
      std::vector<BevBox> pred, truth;
      const int sites = 1 + static_cast<int>(5 * u(rng));
      for (int s = 0; s < sites && pred.size() < 6 && truth.size() < 6; ++s) {
        const double cx = 12.0 * s;
        const double roll = u(rng);
        if (roll < 0.8) truth.push_back({cx, 0.0});
        if (roll > 0.2) pred.push_back({cx + 3.0 * (u(rng) - 0.5), 3.0 * (u(rng) - 0.5)});
      }
      std::shuffle(pred.begin(), pred.end(), rng);
      const auto got = object_metrics(pred, truth, 2.0);
      const auto best = oracle::exhaustive_matches(pred, truth, 2.0);
      if (got.counts.tp != best || got.counts.fp != pred.size() - best || got.counts.fn != truth.size() - best) {
        ++match_bad;
      }
    }
  }
  const bool ok = dbscan_bad == 0 && lof_bad == 0 && fence_bad == 0 && match_bad == 0;
  return {ok, std::to_string(rounds) + " rounds each; mismatches: dbscan " + std::to_string(dbscan_bad) + ", lof " +
                  std::to_string(lof_bad) + ", geofence " + std::to_string(fence_bad) + " (" +
                  std::to_string(fence_points) + " points), matching " + std::to_string(match_bad)};
}

}  // namespace checks
