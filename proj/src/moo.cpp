#include "otcf/moo.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <limits>
#include <random>
#include <utility>

#include "otcf/error.hpp"
#include "otcf/maps.hpp"
#include "otcf/numerics.hpp"

namespace otcf::moo {
namespace {

// Canonical variation-operator settings, fixed rather than configurable.
constexpr double kCrossoverEta = 15.0;
constexpr double kCrossoverRate = 0.9;
constexpr double kMutationEta = 20.0;
// Coefficient-like parameters (slopes, symmetric matrix entries) search a
// fixed symmetric box; translation-like parameters search the per-column
// data range padded by twice its span on each side.
constexpr double kCoefficientRange = 3.0;
constexpr double kTranslationPad = 2.0;

double unit_draw(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

std::size_t uniform_index(std::mt19937_64& g, std::size_t n) {
  return static_cast<std::size_t>(unit_draw(g) * static_cast<double>(n)) % n;
}

bool dominates_pair(double a1, double a2, double b1, double b2) {
  return a1 <= b1 && a2 <= b2 && (a1 < b1 || a2 < b2);
}

struct Individual {
  Vector x;
  Objectives obj;
};

bool feasible(const Objectives& o) { return o.violation <= 0.0; }

// Feasibility-first domination: any feasible point beats any infeasible
// one, infeasible points compare by violation, feasible ones by Pareto
// domination of the objective pair.
bool constrained_dominates(const Objectives& a, const Objectives& b) {
  const bool af = feasible(a);
  const bool bf = feasible(b);
  if (af != bf) return af;
  if (!af) return a.violation < b.violation;
  return dominates_pair(a.f1, a.f2, b.f1, b.f2);
}

// Fast nondominated sort over an arbitrary domination predicate.
template <typename Dominates>
std::vector<std::vector<std::size_t>> sort_by_domination(std::size_t n,
                                                         Dominates&& dom) {
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<int> count(n, 0);
  std::vector<std::vector<std::size_t>> fronts(1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (dom(i, j)) {
        dominated[i].push_back(j);
      } else if (dom(j, i)) {
        ++count[i];
      }
    }
    if (count[i] == 0) fronts[0].push_back(i);
  }
  std::size_t k = 0;
  while (!fronts[k].empty()) {
    std::vector<std::size_t> next;
    for (const std::size_t i : fronts[k]) {
      for (const std::size_t j : dominated[i]) {
        if (--count[j] == 0) next.push_back(j);
      }
    }
    fronts.push_back(std::move(next));
    ++k;
  }
  fronts.pop_back();
  return fronts;
}

std::vector<std::vector<std::size_t>> sort_population(
    const std::vector<Individual>& pop) {
  return sort_by_domination(pop.size(), [&](std::size_t i, std::size_t j) {
    return constrained_dominates(pop[i].obj, pop[j].obj);
  });
}

// Crowding distance of each member of one front, in population indexing.
void crowding_distances(const std::vector<Individual>& pop,
                        const std::vector<std::size_t>& front,
                        std::vector<double>& crowd) {
  const std::size_t m = front.size();
  for (const std::size_t i : front) crowd[i] = 0.0;
  if (m < 3) {
    for (const std::size_t i : front)
      crowd[i] = std::numeric_limits<double>::infinity();
    return;
  }
  for (int dim = 0; dim < 2; ++dim) {
    auto value = [&](std::size_t i) {
      return dim == 0 ? pop[i].obj.f1 : pop[i].obj.f2;
    };
    std::vector<std::size_t> order(front);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return value(a) < value(b); });
    const double span = value(order.back()) - value(order.front());
    crowd[order.front()] = std::numeric_limits<double>::infinity();
    crowd[order.back()] = std::numeric_limits<double>::infinity();
    if (span <= 0.0) continue;
    for (std::size_t r = 1; r + 1 < m; ++r)
      crowd[order[r]] += (value(order[r + 1]) - value(order[r - 1])) / span;
  }
}

std::size_t tournament(const std::vector<std::size_t>& rank,
                       const std::vector<double>& crowd,
                       std::mt19937_64& g) {
  const std::size_t a = uniform_index(g, rank.size());
  const std::size_t b = uniform_index(g, rank.size());
  if (rank[a] != rank[b]) return rank[a] < rank[b] ? a : b;
  if (crowd[a] != crowd[b]) return crowd[a] > crowd[b] ? a : b;
  return a;
}

double clip(double v, double lo, double hi) {
  return std::min(std::max(v, lo), hi);
}

// Simulated binary crossover; children start as copies and each variable
// recombines with probability 1/2 once the pair recombines at all.
void sbx(const Vector& p1, const Vector& p2, const Vector& lo,
         const Vector& hi, std::mt19937_64& g, Vector& c1, Vector& c2) {
  c1 = p1;
  c2 = p2;
  if (unit_draw(g) > kCrossoverRate) return;
  for (Eigen::Index v = 0; v < p1.size(); ++v) {
    if (unit_draw(g) > 0.5) continue;
    const double x1 = p1(v);
    const double x2 = p2(v);
    if (std::abs(x1 - x2) < 1e-14) continue;
    const double u = unit_draw(g);
    const double beta =
        u <= 0.5 ? std::pow(2.0 * u, 1.0 / (kCrossoverEta + 1.0))
                 : std::pow(1.0 / (2.0 - 2.0 * u), 1.0 / (kCrossoverEta + 1.0));
    const double y1 = 0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2);
    const double y2 = 0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2);
    c1(v) = clip(y1, lo(v), hi(v));
    c2(v) = clip(y2, lo(v), hi(v));
    if (unit_draw(g) <= 0.5) std::swap(c1(v), c2(v));
  }
}

void polynomial_mutation(Vector& x, const Vector& lo, const Vector& hi,
                         std::mt19937_64& g) {
  const double rate = 1.0 / static_cast<double>(x.size());
  for (Eigen::Index v = 0; v < x.size(); ++v) {
    if (unit_draw(g) > rate) continue;
    const double span = hi(v) - lo(v);
    if (span <= 0.0) continue;
    const double u = unit_draw(g);
    const double delta =
        u < 0.5 ? std::pow(2.0 * u, 1.0 / (kMutationEta + 1.0)) - 1.0
                : 1.0 - std::pow(2.0 - 2.0 * u, 1.0 / (kMutationEta + 1.0));
    x(v) = clip(x(v) + delta * span, lo(v), hi(v));
  }
}

// Merges candidates into the archive of best points seen so far, keeping a
// mutually nondominated set under feasibility-first domination and one
// representative per exact objective triple. Feasible members are held as a
// staircase sorted by rising f1 and falling f2, so each merge is a binary
// search plus a contiguous erase instead of a quadratic rescan; before the
// first feasible point arrives the archive is the minimum-violation tie set.
void update_archive(std::vector<Individual>& archive,
                    const std::vector<Individual>& candidates) {
  const auto has_feasible = [&archive]() {
    return !archive.empty() && feasible(archive.front().obj);
  };
  for (const auto& c : candidates) {
    if (!feasible(c.obj)) {
      if (has_feasible()) continue;
      if (!archive.empty() && c.obj.violation > archive.front().obj.violation)
        continue;
      if (!archive.empty() && c.obj.violation < archive.front().obj.violation)
        archive.clear();
      bool seen = false;
      for (const auto& a : archive)
        seen = seen || (a.obj.f1 == c.obj.f1 && a.obj.f2 == c.obj.f2);
      if (!seen) archive.push_back(c);
      continue;
    }
    if (!has_feasible()) archive.clear();
    auto at = std::lower_bound(
        archive.begin(), archive.end(), c.obj.f1,
        [](const Individual& a, double f1) { return a.obj.f1 < f1; });
    // The predecessor has smaller f1 and the entry at `at` has f1 no
    // smaller, so either one with f2 <= c's covers c (ties keep the
    // incumbent); members c covers sit contiguously from `at` onward.
    if (at != archive.begin() && std::prev(at)->obj.f2 <= c.obj.f2) continue;
    if (at != archive.end() && at->obj.f1 == c.obj.f1 &&
        at->obj.f2 <= c.obj.f2)
      continue;
    auto last = at;
    while (last != archive.end() && last->obj.f2 >= c.obj.f2) ++last;
    archive.insert(archive.erase(at, last), c);
  }
}

// Dominated area of already-clipped points against reference (1, 1),
// without the warning path of the public entry point.
double swept_area(std::vector<std::pair<double, double>> pts) {
  if (pts.empty()) return 0.0;
  // Transform to distances from the reference corner so the union of
  // origin-anchored boxes measures the dominated region.
  for (auto& p : pts) p = {1.0 - p.first, 1.0 - p.second};
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  double area = 0.0;
  double best_second = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    best_second = std::max(best_second, pts[i].second);
    const double next_first = i + 1 < pts.size() ? pts[i + 1].first : 0.0;
    area += (pts[i].first - next_first) * best_second;
  }
  return area;
}

double archive_hypervolume(const std::vector<Individual>& archive) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& a : archive) {
    if (!feasible(a.obj)) continue;
    pts.emplace_back(clip(a.obj.f1, 0.0, 1.0), clip(a.obj.f2, 0.0, 1.0));
  }
  return swept_area(std::move(pts));
}

Eigen::Index checked_count(metrics::Method family, Eigen::Index n,
                           Eigen::Index d) {
  using metrics::Method;
  switch (family) {
    case Method::Independent:
    case Method::Lipschitz:
    case Method::Bilipschitz:
      return n * d;
    case Method::AffineDiag:
      return 2 * d;
    case Method::AffinePsd:
      return numerics::svec_dim(d) + d;
    case Method::GaussianFull:
      return 2 * numerics::svec_dim(d) + d;
    case Method::GaussianCommutative:
      return 2 * d;
    case Method::GaussianScaled:
      return d + 1;
    default:
      fail(ErrorKind::InvalidInput,
           "this map family has no parameter-vector encoding");
  }
}

}  // namespace

Eigen::Index parameter_count(metrics::Method family, Eigen::Index n,
                             Eigen::Index d) {
  require(n >= 1 && d >= 1, ErrorKind::InvalidInput,
          "parameter layouts need positive point and feature counts");
  return checked_count(family, n, d);
}

MooProblem make_problem(metrics::Method family, const Matrix& group,
                        std::function<double(const Vector&)> score,
                        double alpha) {
  require(group.rows() > 0 && group.cols() > 0, ErrorKind::EmptyInput,
          "cannot build a search problem over an empty group");
  require(static_cast<bool>(score), ErrorKind::InvalidInput,
          "a score callback is required");
  const Eigen::Index n = group.rows();
  const Eigen::Index d = group.cols();
  const Eigen::Index count = checked_count(family, n, d);

  MooProblem problem;
  problem.family = family;
  problem.group = group;
  problem.score = std::move(score);
  problem.alpha = alpha;
  problem.lower_bounds = Vector::Constant(count, -kCoefficientRange);
  problem.upper_bounds = Vector::Constant(count, kCoefficientRange);

  Vector col_lo(d);
  Vector col_hi(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double lo = group.col(j).minCoeff();
    const double hi = group.col(j).maxCoeff();
    const double span = std::max(hi - lo, 1.0);
    col_lo(j) = lo - kTranslationPad * span;
    col_hi(j) = hi + kTranslationPad * span;
  }
  auto translation_block = [&](Eigen::Index offset) {
    for (Eigen::Index j = 0; j < d; ++j) {
      problem.lower_bounds(offset + j) = col_lo(j);
      problem.upper_bounds(offset + j) = col_hi(j);
    }
  };

  using metrics::Method;
  switch (family) {
    case Method::Independent:
    case Method::Lipschitz:
    case Method::Bilipschitz:
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) {
          problem.lower_bounds(i * d + j) = col_lo(j);
          problem.upper_bounds(i * d + j) = col_hi(j);
        }
      break;
    case Method::AffineDiag:
    case Method::AffinePsd:
    case Method::GaussianFull:
    case Method::GaussianCommutative:
    case Method::GaussianScaled:
      translation_block(count - d);
      break;
    default:
      break;  // unreachable, checked_count already rejected it
  }

  const auto moments = maps::estimate_moments(group);
  problem.source_mean = moments.mean;
  problem.source_basis = numerics::sym_eig(moments.cov).vectors;
  return problem;
}

Matrix decode_counterfactuals(const MooProblem& problem,
                              const Vector& params) {
  const Eigen::Index n = problem.group.rows();
  const Eigen::Index d = problem.group.cols();
  require(params.size() == checked_count(problem.family, n, d),
          ErrorKind::DimensionMismatch,
          "parameter vector does not match the family layout");

  using metrics::Method;
  Matrix out(n, d);
  switch (problem.family) {
    case Method::Independent:
    case Method::Lipschitz:
    case Method::Bilipschitz:
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) out(i, j) = params(i * d + j);
      return out;
    case Method::AffineDiag: {
      const auto scale = params.head(d).transpose().array();
      const auto shift = params.tail(d).transpose().array();
      out = ((problem.group.array().rowwise() * scale).rowwise() + shift)
                .matrix();
      return out;
    }
    case Method::AffinePsd: {
      const Matrix a = numerics::sunvec(params.head(numerics::svec_dim(d))).mat();
      out = problem.group * a.transpose();
      out.rowwise() += params.tail(d).transpose();
      return out;
    }
    case Method::GaussianFull: {
      // Middle block encodes the target covariance, which the empirical
      // objectives never touch; only the map block and mean matter here.
      const Matrix a = numerics::sunvec(params.head(numerics::svec_dim(d))).mat();
      Matrix centered = problem.group;
      centered.rowwise() -= problem.source_mean.transpose();
      out = centered * a.transpose();
      out.rowwise() += params.tail(d).transpose();
      return out;
    }
    case Method::GaussianCommutative: {
      const Matrix a = problem.source_basis *
                       params.head(d).asDiagonal() *
                       problem.source_basis.transpose();
      Matrix centered = problem.group;
      centered.rowwise() -= problem.source_mean.transpose();
      out = centered * a.transpose();
      out.rowwise() += params.tail(d).transpose();
      return out;
    }
    case Method::GaussianScaled: {
      Matrix centered = problem.group;
      centered.rowwise() -= problem.source_mean.transpose();
      out = params(0) * centered;
      out.rowwise() += params.tail(d).transpose();
      return out;
    }
    default:
      fail(ErrorKind::InvalidInput,
           "this map family has no parameter-vector encoding");
  }
}

Objectives evaluate(const MooProblem& problem, const Vector& params) {
  if (problem.objectives) return problem.objectives(params);
  require(static_cast<bool>(problem.score), ErrorKind::InvalidInput,
          "a score callback is required");
  const Matrix cf = decode_counterfactuals(problem, params);

  Objectives o;
  o.f1 = metrics::empirical_w2(problem.group, cf);
  try {
    const auto bounds = metrics::empirical_bounds(problem.group, cf);
    o.f2 = metrics::distortion(bounds.upper, bounds.lower);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DegenerateBounds) throw;
    o.f2 = 1.0;  // no usable displacement pair; worst-case sentinel
  }
  Eigen::Index valid = 0;
  for (Eigen::Index i = 0; i < cf.rows(); ++i) {
    if (problem.score(cf.row(i).transpose()) > problem.alpha) ++valid;
  }
  o.violation = 1.0 - static_cast<double>(valid) /
                          static_cast<double>(cf.rows());
  if (valid == cf.rows()) o.violation = 0.0;
  return o;
}

ParetoFront nsga2(const MooProblem& problem, int population, int generations,
                  std::uint64_t seed) {
  require(population >= 2 && population % 2 == 0, ErrorKind::InvalidInput,
          "population size must be even and at least two");
  require(generations >= 0, ErrorKind::InvalidInput,
          "generation count cannot be negative");
  const Vector& lo = problem.lower_bounds;
  const Vector& hi = problem.upper_bounds;
  require(lo.size() == hi.size() && lo.size() > 0,
          ErrorKind::DimensionMismatch, "bound vectors must match");
  require(lo.allFinite() && hi.allFinite() && (hi - lo).minCoeff() >= 0.0,
          ErrorKind::InvalidBox, "search bounds must be finite with lower <= upper");

  std::mt19937_64 g(seed);
  const auto pop_size = static_cast<std::size_t>(population);
  std::vector<Individual> pop(pop_size);
  for (auto& ind : pop) {
    ind.x = Vector(lo.size());
    for (Eigen::Index v = 0; v < lo.size(); ++v)
      ind.x(v) = lo(v) + unit_draw(g) * (hi(v) - lo(v));
    ind.obj = evaluate(problem, ind.x);
  }

  std::vector<Individual> archive;
  update_archive(archive, pop);
  ParetoFront result;
  result.hypervolume_trace.push_back(archive_hypervolume(archive));

  std::vector<std::size_t> rank(pop_size);
  std::vector<double> crowd(pop_size);
  auto rank_and_crowd = [&](const std::vector<Individual>& p,
                            std::vector<std::size_t>& r,
                            std::vector<double>& c) {
    r.assign(p.size(), 0);
    c.assign(p.size(), 0.0);
    const auto fronts = sort_population(p);
    for (std::size_t f = 0; f < fronts.size(); ++f) {
      for (const std::size_t i : fronts[f]) r[i] = f;
      crowding_distances(p, fronts[f], c);
    }
    return fronts;
  };
  rank_and_crowd(pop, rank, crowd);

  for (int gen = 0; gen < generations; ++gen) {
    std::vector<Individual> offspring;
    offspring.reserve(pop_size);
    while (offspring.size() < pop_size) {
      const std::size_t a = tournament(rank, crowd, g);
      const std::size_t b = tournament(rank, crowd, g);
      Individual c1;
      Individual c2;
      sbx(pop[a].x, pop[b].x, lo, hi, g, c1.x, c2.x);
      polynomial_mutation(c1.x, lo, hi, g);
      polynomial_mutation(c2.x, lo, hi, g);
      c1.obj = evaluate(problem, c1.x);
      c2.obj = evaluate(problem, c2.x);
      offspring.push_back(std::move(c1));
      if (offspring.size() < pop_size) offspring.push_back(std::move(c2));
    }
    update_archive(archive, offspring);

    std::vector<Individual> merged;
    merged.reserve(pop_size * 2);
    for (auto& ind : pop) merged.push_back(std::move(ind));
    for (auto& ind : offspring) merged.push_back(std::move(ind));
    std::vector<std::size_t> mrank;
    std::vector<double> mcrowd;
    const auto fronts = rank_and_crowd(merged, mrank, mcrowd);

    std::vector<Individual> next;
    next.reserve(pop_size);
    for (const auto& front : fronts) {
      if (next.size() + front.size() <= pop_size) {
        for (const std::size_t i : front) next.push_back(merged[i]);
      } else {
        std::vector<std::size_t> order(front);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t x, std::size_t y) {
                    if (mcrowd[x] != mcrowd[y]) return mcrowd[x] > mcrowd[y];
                    return x < y;
                  });
        for (const std::size_t i : order) {
          if (next.size() == pop_size) break;
          next.push_back(merged[i]);
        }
      }
      if (next.size() == pop_size) break;
    }
    pop = std::move(next);
    rank_and_crowd(pop, rank, crowd);
    result.hypervolume_trace.push_back(archive_hypervolume(archive));
  }

  std::sort(archive.begin(), archive.end(),
            [](const Individual& a, const Individual& b) {
              if (a.obj.f1 != b.obj.f1) return a.obj.f1 < b.obj.f1;
              return a.obj.f2 < b.obj.f2;
            });
  result.members.reserve(archive.size());
  for (auto& ind : archive) {
    FrontMember m;
    m.parameters = std::move(ind.x);
    m.f1 = ind.obj.f1;
    m.f2 = ind.obj.f2;
    m.feasible = feasible(ind.obj);
    result.members.push_back(std::move(m));
  }
  return result;
}

std::vector<std::vector<std::size_t>> nondominated_sort(
    const std::vector<std::pair<double, double>>& points) {
  for (const auto& p : points)
    require(std::isfinite(p.first) && std::isfinite(p.second),
            ErrorKind::InvalidInput, "objectives must be finite");
  return sort_by_domination(points.size(), [&](std::size_t i, std::size_t j) {
    return dominates_pair(points[i].first, points[i].second, points[j].first,
                          points[j].second);
  });
}

Normalized normalize_objectives(
    const std::vector<std::pair<double, double>>& values) {
  Normalized out;
  out.values = values;
  if (values.empty()) return out;
  double lo1 = values[0].first, hi1 = values[0].first;
  double lo2 = values[0].second, hi2 = values[0].second;
  for (const auto& v : values) {
    lo1 = std::min(lo1, v.first);
    hi1 = std::max(hi1, v.first);
    lo2 = std::min(lo2, v.second);
    hi2 = std::max(hi2, v.second);
  }
  out.degenerate_first = hi1 - lo1 <= 0.0;
  out.degenerate_second = hi2 - lo2 <= 0.0;
  for (auto& v : out.values) {
    v.first = out.degenerate_first ? 0.0 : (v.first - lo1) / (hi1 - lo1);
    v.second = out.degenerate_second ? 0.0 : (v.second - lo2) / (hi2 - lo2);
  }
  return out;
}

double hypervolume_2d(const std::vector<std::pair<double, double>>& front,
                      std::pair<double, double> reference) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(front.size());
  bool clipped = false;
  for (const auto& p : front) {
    const double a = clip(p.first, 0.0, 1.0);
    const double b = clip(p.second, 0.0, 1.0);
    clipped = clipped || a != p.first || b != p.second;
    pts.emplace_back(a, b);
  }
  if (clipped)
    std::cerr << "hypervolume_2d: points outside the unit square were "
                 "clipped onto it\n";

  if (reference.first == 0.0 && reference.second == 0.0) {
    // Complementary convention: union of boxes from the origin to each
    // point, so a front closer to the origin scores lower.
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
      return a.first > b.first;
    });
    double area = 0.0;
    double best_second = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      best_second = std::max(best_second, pts[i].second);
      const double next_first = i + 1 < pts.size() ? pts[i + 1].first : 0.0;
      area += (pts[i].first - next_first) * best_second;
    }
    return area;
  }

  // Standard convention: area between the front and the reference corner.
  for (auto& p : pts) {
    p.first = std::max(reference.first - p.first, 0.0);
    p.second = std::max(reference.second - p.second, 0.0);
  }
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  double area = 0.0;
  double best_second = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    best_second = std::max(best_second, pts[i].second);
    const double next_first = i + 1 < pts.size() ? pts[i + 1].first : 0.0;
    area += (pts[i].first - next_first) * best_second;
  }
  return area;
}

}  // namespace otcf::moo
