#include "ugc/evosearch.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <stdexcept>

#include "ugc/metrics.hpp"

namespace ugc {

ArchCode mutate(const ArchCode& code, const SearchSpaceSpec& spec, double mutation_prob, Rng& rng) {
  require_valid(code, spec);
  ArchCode out = code;
  for (auto& w : out.widths)
    if (rng.bernoulli(mutation_prob)) w = rng.choice(spec.width_choices);
  for (auto& d : out.depths)
    if (rng.bernoulli(mutation_prob)) d = rng.choice(spec.depth_choices);
  return out;
}

ArchCode crossover(const ArchCode& a, const ArchCode& b, Rng& rng) {
  if (a.widths.size() != b.widths.size() || a.depths.size() != b.depths.size())
    throw std::invalid_argument("crossover: parents come from different layouts");
  ArchCode child = a;
  for (size_t i = 0; i < child.widths.size(); ++i)
    if (rng.bernoulli(0.5)) child.widths[i] = b.widths[i];
  for (size_t i = 0; i < child.depths.size(); ++i)
    if (rng.bernoulli(0.5)) child.depths[i] = b.depths[i];
  return child;
}

namespace {

int64_t macs_of(const ArchCode& code, const SearchSpaceSpec& spec) {
  return count_macs(code, spec, spec.image_size).macs;
}

// Index within the choice list.
size_t choice_index(int64_t value, const std::vector<int64_t>& choices) {
  return static_cast<size_t>(std::find(choices.begin(), choices.end(), value) - choices.begin());
}

/// Repairs a candidate into [min_macs, max_macs] by randomly chosen
/// single-gene moves toward the violated bound.
ArchCode constrain_to_budget(ArchCode code, const SearchSpaceSpec& spec, const Budget& budget,
                             Rng& rng) {
  const int64_t n_w = static_cast<int64_t>(code.widths.size());
  const int64_t n_genes = n_w + static_cast<int64_t>(code.depths.size());
  for (int attempt = 0; attempt < 200000; ++attempt) {
    int64_t m = macs_of(code, spec);
    if (m <= budget.max_macs && m >= budget.min_macs) return code;
    const bool shrink = m > budget.max_macs;
    int64_t g = rng.uniform_int(0, n_genes - 1);
    if (g < n_w) {
      size_t i = choice_index(code.widths[static_cast<size_t>(g)], spec.width_choices);
      if (shrink && i > 0) code.widths[static_cast<size_t>(g)] = spec.width_choices[i - 1];
      if (!shrink && i + 1 < spec.width_choices.size())
        code.widths[static_cast<size_t>(g)] = spec.width_choices[i + 1];
    } else {
      size_t j = static_cast<size_t>(g - n_w);
      size_t i = choice_index(code.depths[j], spec.depth_choices);
      if (shrink && i > 0) code.depths[j] = spec.depth_choices[i - 1];
      if (!shrink && i + 1 < spec.depth_choices.size()) code.depths[j] = spec.depth_choices[i + 1];
    }
  }
  throw std::runtime_error("evolve: could not repair a candidate into the budget window");
}

}  // namespace

EvoResult evolve(const SearchSpaceSpec& spec, const Budget& budget, const FitnessFn& fitness,
                 const EvoConfig& params, uint64_t seed, const FitnessFn& tie_break) {
  spec.validate();
  if (budget.max_macs <= 0) throw std::invalid_argument("evolve: budget.max_macs must be positive");
  if (macs_of(sample_smallest(spec), spec) > budget.max_macs)
    throw std::runtime_error("evolve: budget infeasible, smallest sub-network already exceeds it");
  if (budget.min_macs > macs_of(sample_largest(spec), spec))
    throw std::runtime_error("evolve: budget window lies above the largest sub-network");

  Rng rng(seed);
  std::map<std::string, std::pair<double, double>> memo;  // key -> (fitness, tie)
  auto eval = [&](const ArchCode& code) -> const std::pair<double, double>& {
    auto it = memo.find(code.key());
    if (it == memo.end()) {
      double f = fitness(code);
      double t = tie_break ? tie_break(code) : 0.0;
      it = memo.emplace(code.key(), std::make_pair(f, t)).first;
    }
    return it->second;
  };
  auto better = [&](const ArchCode& a, const ArchCode& b) {
    const auto& fa = eval(a);
    const auto& fb = eval(b);
    if (fa.first != fb.first) return fa.first > fb.first;
    if (fa.second != fb.second) return fa.second > fb.second;
    return a.key() < b.key();
  };

  std::vector<ArchCode> population;
  for (int64_t i = 0; i < params.population_size; ++i)
    population.push_back(constrain_to_budget(sample_random(spec, rng), spec, budget, rng));

  EvoResult result;
  result.best = population.front();
  bool have_best = false;

  auto record_generation = [&]() {
    std::sort(population.begin(), population.end(), better);
    double mean = 0;
    for (const ArchCode& c : population) mean += eval(c).first;
    mean /= static_cast<double>(population.size());
    if (!have_best || better(population.front(), result.best)) {
      result.best = population.front();
      have_best = true;
    }
    result.history.best_fitness.push_back(eval(result.best).first);
    result.history.mean_fitness.push_back(mean);
  };

  record_generation();
  const auto n_parents =
      std::max<int64_t>(2, std::llround(params.parent_fraction * static_cast<double>(params.population_size)));
  for (int64_t gen = 0; gen < params.generations; ++gen) {
    std::vector<ArchCode> parents(population.begin(),
                                  population.begin() + std::min<int64_t>(n_parents, params.population_size));
    std::vector<ArchCode> next;
    next.push_back(result.best);  // elitism of one
    while (static_cast<int64_t>(next.size()) < params.population_size) {
      const ArchCode& a = rng.choice(parents);
      const ArchCode& b = rng.choice(parents);
      ArchCode child = mutate(crossover(a, b, rng), spec, params.mutation_prob, rng);
      next.push_back(constrain_to_budget(std::move(child), spec, budget, rng));
    }
    population = std::move(next);
    record_generation();
  }

  result.best_fitness = eval(result.best).first;
  return result;
}

TeacherSearchResult search_teachers(const SearchSpaceSpec& spec, const ArchCode& student,
                                    const FitnessFn& fitness, const EvoConfig& params,
                                    uint64_t seed) {
  require_valid(student, spec);
  const int64_t student_macs = macs_of(student, spec);
  const int64_t largest_macs = macs_of(sample_largest(spec), spec);
  const int64_t smallest_macs = macs_of(sample_smallest(spec), spec);

  const double target = params.teacher_ratio * static_cast<double>(student_macs);
  double lo = (1.0 - params.ratio_tolerance) * target;
  double hi = (1.0 + params.ratio_tolerance) * target;

  TeacherSearchResult result;
  if (lo > static_cast<double>(largest_macs)) {
    // The space cannot provide the requested ratio; fall back to its top end.
    std::cerr << "warning: teacher ratio window exceeds the search space; "
              << "using the largest reachable sub-networks\n";
    lo = static_cast<double>(largest_macs);
    hi = std::max(hi, lo);
    result.window_clamped = true;
  }
  if (hi < static_cast<double>(smallest_macs)) {
    std::cerr << "warning: teacher ratio window lies below the search space\n";
    hi = static_cast<double>(smallest_macs);
    lo = std::min(lo, hi);
    result.window_clamped = true;
  }

  Budget window;
  window.max_macs = static_cast<int64_t>(std::floor(hi));
  window.min_macs = static_cast<int64_t>(std::ceil(lo));
  window.ratio_tolerance = params.ratio_tolerance;

  // Structural objective first, model fitness as the tie-break: "deeper"
  // and "wider" are architecture adjectives, not quality claims.
  FitnessFn depth_sum = [](const ArchCode& c) {
    int64_t s = 0;
    for (int64_t d : c.depths) s += d;
    return static_cast<double>(s);
  };
  FitnessFn min_width = [](const ArchCode& c) {
    return static_cast<double>(*std::min_element(c.widths.begin(), c.widths.end()));
  };

  Budget deeper_budget = window;
  deeper_budget.role = Budget::Role::kTeacherDeeper;
  EvoResult deeper =
      evolve(spec, deeper_budget, depth_sum, params, substream_seed(seed, "teacher.deeper"), fitness);

  Budget wider_budget = window;
  wider_budget.role = Budget::Role::kTeacherWider;
  EvoResult wider =
      evolve(spec, wider_budget, min_width, params, substream_seed(seed, "teacher.wider"), fitness);

  result.deeper = deeper.best;
  result.wider = wider.best;
  result.deeper_cost = count_macs(result.deeper, spec, spec.image_size);
  result.wider_cost = count_macs(result.wider, spec, spec.image_size);
  return result;
}

namespace {

torch::Tensor batched_forward(const std::shared_ptr<SuperNet>& net, const ArchCode& code,
                              const torch::Tensor& sources, int64_t chunk = 8) {
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> outs;
  for (int64_t i = 0; i < sources.size(0); i += chunk)
    outs.push_back(net->forward(code, sources.narrow(0, i, std::min(chunk, sources.size(0) - i))));
  return torch::cat(outs, 0);
}

}  // namespace

FitnessFn make_od_fitness(const std::shared_ptr<SuperNet>& net, const FeatureExtractor& extractor,
                          const LossWeights& weights, torch::Tensor sources) {
  auto refs = std::make_shared<torch::Tensor>(
      batched_forward(net, sample_largest(net->spec()), sources));
  return [net, extractor, weights, sources = std::move(sources), refs](const ArchCode& code) {
    torch::NoGradGuard guard;
    torch::Tensor out = batched_forward(net, code, sources);
    return -od_loss(weights, extractor, *refs, out).item<double>();
  };
}

FitnessFn make_l1_fitness(const std::shared_ptr<SuperNet>& net, torch::Tensor sources,
                          torch::Tensor targets) {
  return [net, sources = std::move(sources), targets = std::move(targets)](const ArchCode& code) {
    torch::NoGradGuard guard;
    torch::Tensor out = batched_forward(net, code, sources);
    return -(out - targets).abs().mean().item<double>();
  };
}

FitnessFn make_fid_fitness(const std::shared_ptr<SuperNet>& net, const FeatureExtractor& extractor,
                           torch::Tensor sources, torch::Tensor targets) {
  auto real = std::make_shared<torch::Tensor>(pooled_features(extractor, targets));
  return [net, extractor, sources = std::move(sources), real](const ArchCode& code) {
    torch::NoGradGuard guard;
    torch::Tensor out = batched_forward(net, code, sources);
    return -fid(*real, pooled_features(extractor, out));
  };
}

}  // namespace ugc
