#include "ceiling/replay_buffer.hpp"

#include <algorithm>
#include <stdexcept>

namespace ceiling {

double alpha_from_counts(const LabelCounts& counts) {
  if (counts.corrected == 0) return 1.0;
  return static_cast<double>(counts.good) / static_cast<double>(counts.corrected);
}

void ReplayBuffer::append_episode(Episode episode) {
  if (episode.transitions.empty()) throw std::invalid_argument("append_episode: empty episode");
  const LabelCounts c = tally(episode);
  if (episode.source == EpisodeSource::Demonstration && c.good != c.total())
    throw std::invalid_argument("append_episode: demonstration with non-Good labels");
  auto stored = std::make_shared<const Episode>(std::move(episode));
  std::lock_guard lock(mutex_);
  episodes_.push_back(std::move(stored));
  counts_ += c;
}

LabelCounts ReplayBuffer::counts() const {
  std::lock_guard lock(mutex_);
  return counts_;
}

double ReplayBuffer::alpha() const { return alpha_from_counts(counts()); }

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mutex_);
  return episodes_.size();
}

WeightedTrajectory ReplayBuffer::resolve(std::shared_ptr<const Episode> episode, double alpha) {
  WeightedTrajectory out;
  out.weights.reserve(episode->transitions.size());
  for (const auto& t : episode->transitions) {
    switch (t.label) {
      case FeedbackLabel::Good: out.weights.push_back(1.0); break;
      case FeedbackLabel::Discarded: out.weights.push_back(0.0); break;
      case FeedbackLabel::Corrected: out.weights.push_back(alpha); break;
    }
  }
  out.episode = std::move(episode);
  return out;
}

Batch ReplayBuffer::sample_batch(std::size_t n_trajectories, std::mt19937_64& rng) const {
  if (n_trajectories == 0) throw std::invalid_argument("sample_batch: n_trajectories must be >= 1");
  std::vector<std::shared_ptr<const Episode>> picked;
  double alpha = 1.0;
  {
    std::lock_guard lock(mutex_);
    if (episodes_.empty()) throw std::logic_error("sample_batch: replay buffer is empty");
    std::uniform_int_distribution<std::size_t> pick(0, episodes_.size() - 1);
    picked.reserve(n_trajectories);
    for (std::size_t i = 0; i < n_trajectories; ++i) picked.push_back(episodes_[pick(rng)]);
    alpha = alpha_from_counts(counts_);
  }
  Batch batch;
  batch.reserve(picked.size());
  for (auto& e : picked) batch.push_back(resolve(std::move(e), alpha));
  return batch;
}

Batch ReplayBuffer::all_weighted() const {
  std::vector<std::shared_ptr<const Episode>> all;
  double alpha = 1.0;
  {
    std::lock_guard lock(mutex_);
    all = episodes_;
    alpha = alpha_from_counts(counts_);
  }
  Batch batch;
  batch.reserve(all.size());
  for (auto& e : all) batch.push_back(resolve(std::move(e), alpha));
  return batch;
}

std::vector<std::shared_ptr<const Episode>> ReplayBuffer::episodes() const {
  std::lock_guard lock(mutex_);
  return episodes_;
}

}  // namespace ceiling
