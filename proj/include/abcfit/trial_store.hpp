#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "abcfit/error.hpp"
#include "abcfit/forward_model.hpp"
#include "abcfit/param_space.hpp"

namespace abcfit {

enum class Stage { kPreliminary, kRefined };

inline std::string_view stage_name(Stage s) {
  return s == Stage::kPreliminary ? "preliminary" : "refined";
}

inline Stage parse_stage(std::string_view s) {
  if (s == "preliminary") return Stage::kPreliminary;
  if (s == "refined") return Stage::kRefined;
  throw FormatError("unknown stage '" + std::string(s) + "'");
}

// One forward-model evaluation. A failed trial (external model error) carries
// an infinite epsilon, an empty curve, and is never accepted.
struct Trial {
  std::size_t index = 0;
  Stage stage = Stage::kPreliminary;
  ParamVector theta;
  MobilityCurve curve;
  double epsilon = 0.0;
  bool accepted = false;
  bool failed = false;
};

// Append-only record of every trial of a fit, in evaluation order.
class TrialStore {
 public:
  TrialStore() = default;
  explicit TrialStore(std::uint64_t master_seed) : master_seed_(master_seed) {}

  const Trial& append(Trial trial) {
    trial.index = trials_.size();
    if (!trials_.empty() && trials_.back().stage == Stage::kRefined &&
        trial.stage == Stage::kPreliminary)
      throw InvalidInput("preliminary trials must precede refined trials");
    trials_.push_back(std::move(trial));
    return trials_.back();
  }

  std::span<const Trial> trials() const { return trials_; }
  std::size_t size() const { return trials_.size(); }
  bool empty() const { return trials_.empty(); }
  const Trial& operator[](std::size_t i) const { return trials_[i]; }

  // Contiguous run of trials belonging to one stage.
  std::span<const Trial> segment(Stage stage) const {
    std::size_t first = 0;
    while (first < trials_.size() && trials_[first].stage != stage) ++first;
    std::size_t last = first;
    while (last < trials_.size() && trials_[last].stage == stage) ++last;
    return std::span<const Trial>(trials_).subspan(first, last - first);
  }

  std::uint64_t master_seed() const { return master_seed_; }

  void set_space(Stage stage, const SearchSpace& space) {
    (stage == Stage::kPreliminary ? prelim_space_ : refined_space_) = space;
  }
  const std::optional<SearchSpace>& space(Stage stage) const {
    return stage == Stage::kPreliminary ? prelim_space_ : refined_space_;
  }

 private:
  std::vector<Trial> trials_;
  std::uint64_t master_seed_ = 0;
  std::optional<SearchSpace> prelim_space_;
  std::optional<SearchSpace> refined_space_;
};

}  // namespace abcfit
