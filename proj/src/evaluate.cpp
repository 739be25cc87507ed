#include "lidarbg/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

#include "lidarbg/csv.hpp"
#include "lidarbg/error.hpp"

namespace lidarbg {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double side_of(const Screenline& line, const Vec2& p) {
  const Vec2 d = line.b - line.a;
  const Vec2 q = p - line.a;
  return d.x() * q.y() - d.y() * q.x();
}

// Parameter along p0->p1 where it meets the screenline segment, if it does.
std::optional<double> crossing_parameter(const Screenline& line, const Vec2& p0, const Vec2& p1) {
  const Vec2 r = p1 - p0;
  const Vec2 s = line.b - line.a;
  const double denom = r.x() * s.y() - r.y() * s.x();
  if (denom == 0.0) return std::nullopt;
  const Vec2 qp = line.a - p0;
  const double t = (qp.x() * s.y() - qp.y() * s.x()) / denom;
  const double u = (qp.x() * r.y() - qp.y() * r.x()) / denom;
  if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return t;
}

}  // namespace

Metrics metrics_from_counts(const ConfusionCounts& c) {
  if (c.total() == 0) throw EmptyInput("no samples to score");
  Metrics m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

ConfusionCounts confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) {
    throw LengthMismatch("prediction has " + std::to_string(predicted.size()) + " labels, truth has " +
                         std::to_string(truth.size()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool t = truth[i] != 0;
    if (p && t) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (t) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

Metrics point_metrics(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  return metrics_from_counts(confusion(predicted, truth));
}

ObjectMatch object_metrics(std::span<const BevBox> predicted, std::span<const BevBox> truth, double match_radius) {
  if (!(match_radius > 0.0)) throw ConfigError("match radius must be > 0");
  struct Pair {
    double d;
    std::size_t p, g;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < predicted.size(); ++p) {
    for (std::size_t g = 0; g < truth.size(); ++g) {
      const double d = std::hypot(predicted[p].x - truth[g].x, predicted[p].y - truth[g].y);
      if (d <= match_radius) pairs.push_back({d, p, g});
    }
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const Pair& a, const Pair& b) { return std::tie(a.d, a.p, a.g) < std::tie(b.d, b.p, b.g); });
  std::vector<char> pu(predicted.size(), 0), gu(truth.size(), 0);
  ObjectMatch out;
  for (const auto& pr : pairs) {
    if (pu[pr.p] || gu[pr.g]) continue;
    pu[pr.p] = gu[pr.g] = 1;
    out.matches.emplace_back(pr.p, pr.g);
  }
  out.counts.tp = out.matches.size();
  out.counts.fp = predicted.size() - out.matches.size();
  out.counts.fn = truth.size() - out.matches.size();
  out.metrics.precision = ratio(out.counts.tp, out.counts.tp + out.counts.fp);
  out.metrics.recall = ratio(out.counts.tp, out.counts.tp + out.counts.fn);
  const double pr = out.metrics.precision + out.metrics.recall;
  out.metrics.f1 = pr > 0.0 ? 2.0 * out.metrics.precision * out.metrics.recall / pr : 0.0;
  return out;
}

double path_count_accuracy(double reference_count, double measured_count) {
  if (!(reference_count > 0.0)) throw ZeroReference("reference count must be > 0");
  return 1.0 - std::abs(measured_count - reference_count) / reference_count;
}

MovementCounts count_movements(std::span<const TrajectorySample> samples, const Screenline& line,
                               const CountWindow& window, double debounce_s) {
  std::map<std::uint64_t, std::vector<const TrajectorySample*>> by_track;
  for (const auto& s : samples) by_track[s.track_id].push_back(&s);

  MovementCounts counts;
  for (auto& [id, track] : by_track) {
    std::stable_sort(track.begin(), track.end(),
                     [](const auto* a, const auto* b) { return a->timestamp < b->timestamp; });
    double last_side = 0.0;
    Vec2 last_pos = Vec2::Zero();
    double last_time = 0.0;
    std::optional<double> last_counted;
    for (const auto* s : track) {
      const Vec2 pos = s->position.head<2>();
      const double side = side_of(line, pos);
      if (side != 0.0 && last_side != 0.0 && (side > 0.0) != (last_side > 0.0)) {
        const auto t = crossing_parameter(line, last_pos, pos);
        const double when = t ? last_time + *t * (s->timestamp - last_time) : s->timestamp;
        const bool counted_recently = last_counted && when - *last_counted < debounce_s;
        if (t && s->status == TrackStatus::Confirmed && when >= window.start && when < window.end &&
            !counted_recently) {
          if (last_side > 0.0) {
            ++counts.inbound;
          } else {
            ++counts.outbound;
          }
          last_counted = when;
        }
      }
      if (side != 0.0) {
        last_side = side;
        last_pos = pos;
        last_time = s->timestamp;
      }
    }
  }
  return counts;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << "level,scope,tp,tn,fp,fn,accuracy,precision,recall,f1\n";
  for (const auto& r : rows) {
    out << r.level << ',' << r.scope << ',' << r.counts.tp << ',' << r.counts.tn << ',' << r.counts.fp << ','
        << r.counts.fn << ',' << csv::format_double(r.metrics.accuracy) << ','
        << csv::format_double(r.metrics.precision) << ',' << csv::format_double(r.metrics.recall) << ','
        << csv::format_double(r.metrics.f1) << '\n';
  }
}

void write_metrics_table(std::ostream& out, std::span<const MetricsRow> rows) {
  out << std::left << std::setw(8) << "level" << std::setw(18) << "scope" << std::right << std::setw(10) << "tp"
      << std::setw(10) << "fp" << std::setw(10) << "fn" << std::setw(10) << "acc" << std::setw(10) << "prec"
      << std::setw(10) << "recall" << std::setw(10) << "f1" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    out << std::left << std::setw(8) << r.level << std::setw(18) << r.scope << std::right << std::setw(10)
        << r.counts.tp << std::setw(10) << r.counts.fp << std::setw(10) << r.counts.fn << std::setw(10)
        << r.metrics.accuracy << std::setw(10) << r.metrics.precision << std::setw(10) << r.metrics.recall
        << std::setw(10) << r.metrics.f1 << '\n';
  }
  out.unsetf(std::ios::fixed);
}

}  // namespace lidarbg
