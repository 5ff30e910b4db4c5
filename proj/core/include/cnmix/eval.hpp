#pragma once

#include <span>
#include <vector>

#include "cnmix/datasets.hpp"
#include "cnmix/models.hpp"

namespace cnmix::harness {

enum class EnsembleRule { mean_softmax, mean_logit };

// Top-1 accuracy over the chosen split, evaluation mode, no augmentation.
// Ties at the argmax resolve to the lowest class index.
double evaluate(models::PeerStudent& peer, const datasets::Dataset& data,
                bool test_split = true, int batch_size = 256);

// Accuracy over an explicit index subset of a split.
double evaluate_indices(models::PeerStudent& peer, const datasets::Dataset& data,
                        bool test_split, std::span<const int> indices,
                        int batch_size = 256);

// Argmax of the averaged per-peer class probabilities (or averaged logits).
double evaluate_ensemble(std::span<models::PeerStudent> peers,
                         const datasets::Dataset& data,
                         EnsembleRule rule = EnsembleRule::mean_softmax,
                         bool test_split = true, int batch_size = 256);

// Counting core shared by both evaluators; ties at the argmax go to the
// lowest class index.
long correct_top1(const MatD& scores, std::span<const int> labels);

// Per-sample ensemble scores: mean softmax probabilities or mean logits.
MatD ensemble_scores(std::span<const MatD> peer_logits, EnsembleRule rule);

} // namespace cnmix::harness
