#pragma once

#include <memory>
#include <mutex>
#include <random>
#include <vector>

#include "ceiling/types.hpp"

namespace ceiling {

// One sampled trajectory with its per-step loss weights q.
struct WeightedTrajectory {
  std::shared_ptr<const Episode> episode;
  std::vector<double> weights;
};

using Batch = std::vector<WeightedTrajectory>;

// Ratio of non-corrected (Good only) to corrected samples; 1 when nothing was corrected.
double alpha_from_counts(const LabelCounts& counts);

// Episode store with incrementally maintained label tallies.
//
// Safe for one appending thread and one sampling thread. Appends are atomic per
// episode: a sampler sees either none or all of an episode, and the counts it
// uses for weight resolution always match the episodes it can pick from.
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(const ReplayBuffer&) = delete;
  ReplayBuffer& operator=(const ReplayBuffer&) = delete;

  // Throws std::invalid_argument on an empty episode.
  void append_episode(Episode episode);

  LabelCounts counts() const;
  double alpha() const;
  std::size_t size() const;
  bool empty() const { return size() == 0; }

  // Uniform trajectory sampling with replacement. Throws std::logic_error when empty.
  Batch sample_batch(std::size_t n_trajectories, std::mt19937_64& rng) const;

  // Every stored episode in append order, weights resolved against the current counts.
  Batch all_weighted() const;

  std::vector<std::shared_ptr<const Episode>> episodes() const;

 private:
  static WeightedTrajectory resolve(std::shared_ptr<const Episode> episode, double alpha);

  mutable std::mutex mutex_;
  std::vector<std::shared_ptr<const Episode>> episodes_;
  LabelCounts counts_;
};

}  // namespace ceiling
