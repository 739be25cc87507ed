#include <doctest.h>

#include <cmath>
#include <random>

#include "criteria.hpp"
#include "lidarbg/error.hpp"
#include "lidarbg/dpgmm.hpp"
#include "oracles.hpp"

using namespace lidarbg;

namespace {

std::vector<Vec3> blob(std::mt19937_64& rng, const Vec3& c, double sd, int n) {
  std::normal_distribution<double> z(0.0, sd);
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) pts.emplace_back(c + Vec3(z(rng), z(rng), z(rng)));
  return pts;
}

}  // namespace

TEST_CASE("stick breaking") {
  const std::vector<double> half{0.5, 0.5, 0.5};
  const auto sb = stick_breaking(half);
  REQUIRE(sb.proportions.size() == 3);
  CHECK(sb.proportions[0] == 0.5);
  CHECK(sb.proportions[1] == 0.25);
  CHECK(sb.proportions[2] == 0.125);
  CHECK(sb.remainder == 0.125);

  const double eps = 1e-9;
  const std::vector<double> nearly_one{1.0 - eps, 0.3, 0.7};
  const auto s2 = stick_breaking(nearly_one);
  CHECK(s2.proportions[0] == doctest::Approx(1.0 - eps));
  CHECK(s2.proportions[1] < 1e-8);
  CHECK(s2.proportions[2] < 1e-8);

  CHECK_THROWS_AS(stick_breaking(std::vector<double>{0.5, 1.0}), DomainError);
  CHECK_THROWS_AS(stick_breaking(std::vector<double>{0.0}), DomainError);
}

TEST_CASE("occupation numbers") {
  CHECK(occupation_pmf(std::vector<int>{1, 1}, std::vector<double>{0.5, 0.5}) == doctest::Approx(0.5));
  for (int n = 0; n <= 6; ++n) {
    CHECK(occupation_pmf(std::vector<int>{n, 0}, std::vector<double>{0.3, 0.7}) == doctest::Approx(std::pow(0.3, n)));
  }
  CHECK_THROWS_AS(occupation_pmf(std::vector<int>{1}, std::vector<double>{0.5, 0.5}), DomainError);
  CHECK_THROWS_AS(occupation_pmf(std::vector<int>{1, 1}, std::vector<double>{0.5, 0.6}), DomainError);
  const auto out = checks::stick_breaking_and_occupation(3);
  CHECK_MESSAGE(out.pass, out.detail);
}

TEST_CASE("first observation opens one table") {
  GridDPGMM m;
  const Vec3 x(3.0, 4.0, -1.0);
  m.update(CellObservation::at(x, 20.0), 2.5);
  REQUIRE(m.tables().size() == 1);
  CHECK(m.tables()[0].weight() == 2.5);
  const auto post = m.table_posterior(0);
  CHECK((post.mu - x).norm() < 1e-12);
  CHECK(m.prob_x_given_background(x) == doctest::Approx(m.tables()[0].predictive.pdf(x)));
}

TEST_CASE("weighted update equals repeated unit updates") {
  const auto out = checks::weighted_replication(60, 17);
  CHECK_MESSAGE(out.pass, out.detail);
}

TEST_CASE("posterior matches the sequential textbook recursion") {
  std::mt19937_64 rng(4);
  const auto pts = blob(rng, Vec3(1, 2, 3), 0.4, 30);
  NIWPrior prior;
  prior.mu0 = Vec3(0.5, 1.0, 2.0);
  WeightedStats stats;
  for (const auto& p : pts) stats.add(p, 1.0);
  const auto a = posterior(prior, stats);
  const auto b = oracle::niw_sequential(prior, pts);
  CHECK(std::abs(a.kappa - b.kappa) < 1e-12);
  CHECK(std::abs(a.nu - b.nu) < 1e-12);
  CHECK((a.mu - b.mu).norm() < 1e-9);
  CHECK((a.psi - b.psi).cwiseAbs().maxCoeff() < 1e-9);

  WeightedStats back = stats;
  for (std::size_t i = 10; i < pts.size(); ++i) back.remove(pts[i], 1.0);
  WeightedStats first;
  for (std::size_t i = 0; i < 10; ++i) first.add(pts[i], 1.0);
  CHECK(std::abs(back.weight - first.weight) < 1e-9);
  CHECK((back.mean - first.mean).norm() < 1e-9);
  CHECK((back.scatter - first.scatter).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("a far outlier opens a second table") {
  std::mt19937_64 rng(12);
  const auto pts = blob(rng, Vec3(5, 5, 0), 0.1, 200);
  GridDPGMM m;
  for (const auto& p : pts) m.update(CellObservation::at(p, 30.0), 1.0);
  REQUIRE(m.tables().size() == 1);

  // Brute-force scores from closed forms at the decision point.
  const Vec3 far(50, 50, 0);
  NIWPrior prior = m.prior();
  const auto post = oracle::niw_sequential(prior, pts);
  const auto table_post = m.table_posterior(0);
  CHECK((post.mu - table_post.mu).norm() < 1e-9);
  CHECK((post.psi - table_post.psi).cwiseAbs().maxCoeff() < 1e-9);
  const double dof = post.nu - 2.0;
  const Mat3 jitter = kCovarianceJitter * Mat3::Identity();
  const double existing =
      std::log(200.0) + oracle::student_t_log_pdf(far, post.mu, post.psi * (post.kappa + 1.0) / (post.kappa * dof) + jitter, dof);
  const double prior_dof = prior.nu0 - 2.0;
  const double fresh = std::log(m.options().alpha) +
                       oracle::student_t_log_pdf(
                           far, prior.mu0, prior.psi0 * (prior.kappa0 + 1.0) / (prior.kappa0 * prior_dof) + jitter, prior_dof);
  CHECK(fresh > existing);
  const auto scores = m.log_assignment_scores(far);
  REQUIRE(scores.size() == 2);
  CHECK(scores[0] == doctest::Approx(existing).epsilon(1e-9));
  CHECK(scores[1] == doctest::Approx(fresh).epsilon(1e-9));

  m.update(CellObservation::at(far, 30.0), 1.0);
  CHECK(m.tables().size() == 2);
}

TEST_CASE("predictive density is non-negative and peaks at its location") {
  std::mt19937_64 rng(9);
  const auto pts = blob(rng, Vec3(-3, 7, 1), 0.3, 25);
  WeightedStats s;
  for (const auto& p : pts) s.add(p, 1.0);
  const auto pred = predictive(posterior(NIWPrior{}, s));
  const double peak = pred.pdf(pred.location());
  std::normal_distribution<double> z(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const Vec3 x = pred.location() + Vec3(z(rng), z(rng), z(rng));
    const double p = pred.pdf(x);
    CHECK(p >= 0.0);
    CHECK(p <= peak);
  }
}

TEST_CASE("predictive integrates to one and approaches the Gaussian fit") {
  const auto out = checks::predictive_density(1000000, 5);
  CHECK_MESSAGE(out.pass, out.detail);
}

TEST_CASE("background likelihood is the weight-averaged predictive") {
  std::mt19937_64 rng(2);
  const auto a = blob(rng, Vec3(0, 0, 0), 0.2, 6);
  const auto b = blob(rng, Vec3(4, 0, 0), 0.2, 2);
  std::vector<Vec3> pts = a;
  pts.insert(pts.end(), b.begin(), b.end());
  std::vector<double> w(pts.size(), 0.5);
  std::vector<int> labels;
  for (std::size_t i = 0; i < pts.size(); ++i) labels.push_back(i < a.size() ? 0 : 1);
  const auto m = GridDPGMM::from_assignments({}, pts, w, labels);
  REQUIRE(m.tables().size() == 2);
  CHECK(m.tables()[0].weight() == doctest::Approx(3.0));
  CHECK(m.tables()[1].weight() == doctest::Approx(1.0));
  for (const Vec3& x : {Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(4, 0.1, 0)}) {
    const double want = 0.75 * m.tables()[0].predictive.pdf(x) + 0.25 * m.tables()[1].predictive.pdf(x);
    CHECK(m.prob_x_given_background(x) == doctest::Approx(want).epsilon(1e-12));
  }

  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    GridDPGMM r;
    for (int i = 0; i < 40; ++i) r.update(CellObservation::at(Vec3(u(rng), u(rng), 0.2 * u(rng)), 1.0), 1.0 + (i % 3));
    const Vec3 x(u(rng), u(rng), 0.0);
    double total = 0.0, sum = 0.0;
    for (const auto& t : r.tables()) total += t.weight();
    for (const auto& t : r.tables()) sum += t.weight() / total * t.predictive.pdf(x);
    CHECK(r.prob_x_given_background(x) == doctest::Approx(sum).epsilon(1e-10));
  }
  CHECK_THROWS_AS(GridDPGMM{}.prob_x_given_background(Vec3::Zero()), EmptyModel);
}

TEST_CASE("decision rule") {
  DecisionRule rule;
  CHECK(rule.background_probability(1.0) == doctest::Approx(0.25));
  CHECK(rule.background_probability(0.0) == 0.0);
  CHECK(rule.background_probability(1e300) == doctest::Approx(0.5));
  CHECK(rule.background_probability(std::numeric_limits<double>::infinity()) == 0.5);
  CHECK(rule.decision_level() == 0.25);

  GridDPGMM m;
  for (int i = 0; i < 50; ++i) m.update(CellObservation::at(Vec3(10, 0, -1), 40.0), 1.0);
  const auto near = m.classify(CellObservation::at(Vec3(10, 0, -1), 40.0), rule);
  CHECK(near.label == Label::Background);
  const auto far = m.classify(CellObservation::at(Vec3(3, 0, -1), 40.0), rule);
  CHECK(far.label == Label::Foreground);
  CHECK(far.p_background < 1e-6);

  DecisionRule bayes;
  bayes.bayes_normalized = true;
  CHECK(bayes.decision_level() == 0.5);
  CHECK(bayes.background_probability(1.0) == doctest::Approx(0.5));
}

TEST_CASE("no-return is a Bernoulli mass") {
  DecisionRule rule;
  GridDPGMM sky;
  for (int i = 0; i < 20; ++i) sky.update(CellObservation::no_return(), 1.0);
  sky.update(CellObservation::at(Vec3(1, 1, 1), 5.0), 1.0);
  CHECK(sky.classify(CellObservation::no_return(), rule).label == Label::Background);

  GridDPGMM wall;
  for (int i = 0; i < 20; ++i) wall.update(CellObservation::at(Vec3(1, 1, 1), 5.0), 1.0);
  wall.update(CellObservation::no_return(), 1.0);
  const auto d = wall.classify(CellObservation::no_return(), rule);
  CHECK(d.label == Label::Foreground);
  CHECK(d.p_background == doctest::Approx(1.0 / 21.0));
  CHECK_THROWS_AS(GridDPGMM{}.classify(CellObservation::no_return(), rule), EmptyModel);
}

TEST_CASE("table cap bounds the mixture") {
  DPGMMOptions opt;
  opt.table_cap = 3;
  GridDPGMM m(opt);
  for (int i = 0; i < 10; ++i) m.update(CellObservation::at(Vec3(10.0 * i, 0, 0), 1.0), 1.0 + i);
  CHECK(m.tables().size() <= 3);
  CHECK_THROWS_AS(m.update(CellObservation::at(Vec3(NAN, 0, 0), 1.0), 1.0), NonFiniteObservation);
}

TEST_CASE("gibbs refinement") {
  std::mt19937_64 rng(33);
  SUBCASE("zero sweeps change nothing") {
    DPGMMOptions opt;
    opt.keep_history = true;
    GridDPGMM m(opt);
    for (const auto& p : blob(rng, Vec3(1, 1, 1), 0.2, 20)) m.update(CellObservation::at(p, 1.0), 1.0);
    const auto before = m.tables();
    CHECK(m.gibbs_refine(0, rng).empty());
    REQUIRE(m.tables().size() == before.size());
    for (std::size_t t = 0; t < before.size(); ++t) CHECK(m.tables()[t].stats.mean == before[t].stats.mean);
  }
  SUBCASE("mis-seeded clusters are recovered") {
    const Vec3 ca(0, 0, 0), cb(3, 0, 0);
    const auto a = blob(rng, ca, 0.2, 40);
    const auto b = blob(rng, cb, 0.2, 40);
    std::vector<Vec3> pts;
    std::vector<int> labels;
    for (std::size_t i = 0; i < a.size(); ++i) {
      // Every fourth point of each cluster starts at the wrong table.
      pts.push_back(a[i]);
      labels.push_back(i % 4 == 0 ? 1 : 0);
      pts.push_back(b[i]);
      labels.push_back(i % 4 == 1 ? 0 : 1);
    }
    DPGMMOptions opt;
    opt.keep_history = true;
    opt.prior.mu0 = Vec3(1.5, 0, 0);
    opt.fixed_prior_mean = true;
    auto m = GridDPGMM::from_assignments(opt, pts, std::vector<double>(pts.size(), 1.0), labels);
    m.gibbs_refine(5, rng);
    std::vector<Vec3> means;
    for (const auto& t : m.tables()) {
      if (t.weight() >= 10.0) means.push_back(t.stats.mean);
    }
    REQUIRE(means.size() == 2);
    const bool ordered = means[0].x() < means[1].x();
    CHECK((means[ordered ? 0 : 1] - ca).norm() < 0.5);
    CHECK((means[ordered ? 1 : 0] - cb).norm() < 0.5);
  }
  SUBCASE("a single point cannot move") {
    DPGMMOptions opt;
    opt.keep_history = true;
    GridDPGMM m(opt);
    m.update(CellObservation::at(Vec3(2, 2, 2), 1.0), 1.0);
    m.gibbs_refine(3, rng);
    REQUIRE(m.tables().size() == 1);
    CHECK(m.tables()[0].stats.mean == Vec3(2, 2, 2));
    CHECK(m.tables()[0].weight() == 1.0);
  }
  SUBCASE("history is required") {
    GridDPGMM m;
    m.update(CellObservation::at(Vec3(2, 2, 2), 1.0), 1.0);
    CHECK_THROWS_AS(m.gibbs_refine(1, rng), NoHistory);
  }
}
