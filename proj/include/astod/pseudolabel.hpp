#pragma once

#include <map>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "astod/dataset.hpp"
#include "astod/error.hpp"
#include "astod/nms.hpp"
#include "astod/thresholding.hpp"

namespace astod {

/// Loss weight of a pseudo-label with score `s` under threshold `tau`:
/// (s - tau) / (1 - tau) for tau <= s <= 1, and 1 otherwise. A threshold of
/// exactly 1 gives weight 1 (the limit of the ratio at s = 1).
inline double alpha_weight(double s, double tau) noexcept {
  if (tau >= 1.0) return 1.0;
  if (s >= tau && s <= 1.0) return (s - tau) / (1.0 - tau);
  return 1.0;
}

/// Two-sided form: (s - low) / (high - low) for low <= s < high, 1 otherwise.
/// With high = 1 it reduces to alpha_weight for every s < 1.
inline double alpha_weight_general(double s, double tau_low, double tau_high) {
  if (!(tau_low < tau_high)) throw InvalidThresholdPair(tau_low, tau_high);
  if (s >= tau_low && s < tau_high) return (s - tau_low) / (tau_high - tau_low);
  return 1.0;
}

using CandidateMap = std::map<ImageId, std::vector<Detection>>;

/// Keeps detections with score >= tau(class). Images left without any
/// detection are removed.
inline CandidateMap filter_candidates(const CandidateMap& candidates, const ThresholdSet& ts) {
  CandidateMap out;
  for (const auto& [image, dets] : candidates) {
    std::vector<Detection> kept;
    for (const Detection& d : dets) {
      const std::optional<double> tau = ts.tau_for(d.class_id);
      if (tau && d.score >= *tau) kept.push_back(d);
    }
    if (!kept.empty()) out.emplace(image, std::move(kept));
  }
  return out;
}

/// Same as filter_candidates but with one fixed threshold for every class.
inline CandidateMap filter_fixed(const CandidateMap& candidates, double tau) {
  CandidateMap out;
  for (const auto& [image, dets] : candidates) {
    std::vector<Detection> kept;
    for (const Detection& d : dets) {
      if (d.score >= tau) kept.push_back(d);
    }
    if (!kept.empty()) out.emplace(image, std::move(kept));
  }
  return out;
}

struct PseudoLabel {
  Detection detection;
  double alpha = 1.0;
  double source_tau = 0.0;

  friend bool operator==(const PseudoLabel&, const PseudoLabel&) = default;
};

struct PseudoImage {
  ImageId image_id = 0;
  std::vector<PseudoLabel> labels;

  friend bool operator==(const PseudoImage&, const PseudoImage&) = default;
};

/// Attaches the threshold and its alpha weight to every kept detection.
/// With `weighted == false` all weights are 1.
inline std::vector<PseudoImage> emit_pseudo_dataset(const CandidateMap& filtered,
                                                    const ThresholdSet& ts,
                                                    bool weighted = true) {
  std::vector<PseudoImage> out;
  out.reserve(filtered.size());
  for (const auto& [image, dets] : filtered) {
    PseudoImage pi{image, {}};
    pi.labels.reserve(dets.size());
    for (const Detection& d : dets) {
      const double tau = ts.tau_for(d.class_id).value_or(1.0);
      pi.labels.push_back(PseudoLabel{d, weighted ? alpha_weight(d.score, tau) : 1.0, tau});
    }
    out.push_back(std::move(pi));
  }
  return out;
}

inline std::size_t count_pseudo_labels(std::span<const PseudoImage> pseudo) {
  std::size_t n = 0;
  for (const PseudoImage& p : pseudo) n += p.labels.size();
  return n;
}

/// Materializes pseudo-labels as a dataset. Image records come from the
/// unlabeled pool; annotation ids are assigned from `first_annotation_id` on.
inline Dataset pseudo_to_dataset(std::span<const PseudoImage> pseudo, const Dataset& pool,
                                 std::int64_t first_annotation_id = 1) {
  Dataset ds;
  ds.categories = pool.categories;
  const auto index = pool.image_index();
  std::int64_t next_id = first_annotation_id;
  for (const PseudoImage& p : pseudo) {
    auto it = index.find(p.image_id);
    if (it == index.end()) {
      throw IntegrityError("pseudo-label references missing image id " + std::to_string(p.image_id));
    }
    ds.images.push_back(*it->second);
    for (const PseudoLabel& l : p.labels) {
      ds.annotations.push_back(Annotation{next_id++, p.image_id, l.detection.class_id, l.detection.box,
                                          l.detection.score, l.alpha, Source::kPseudo});
    }
  }
  ds.canonicalize();
  return ds;
}

/// Disjoint union of the labeled set and the pseudo-labeled set. Labeled
/// annotations are tagged source "gt" with weight 1.
inline Dataset merge_datasets(const Dataset& labeled, const Dataset& pseudo) {
  std::set<ImageId> labeled_ids;
  for (const ImageInfo& im : labeled.images) labeled_ids.insert(im.id);
  for (const ImageInfo& im : pseudo.images) {
    if (labeled_ids.contains(im.id)) throw DuplicateImageId(im.id);
  }

  Dataset merged;
  merged.images = labeled.images;
  merged.images.insert(merged.images.end(), pseudo.images.begin(), pseudo.images.end());

  std::map<CategoryId, std::string> cats;
  for (const Category& c : labeled.categories) cats.emplace(c.id, c.name);
  for (const Category& c : pseudo.categories) {
    auto [it, inserted] = cats.emplace(c.id, c.name);
    if (!inserted && it->second != c.name) {
      throw IntegrityError("category " + std::to_string(c.id) + " named '" + it->second +
                           "' and '" + c.name + "'");
    }
  }
  for (const auto& [id, name] : cats) merged.categories.push_back(Category{id, name});

  for (Annotation a : labeled.annotations) {
    a.alpha = 1.0;
    a.source = Source::kGroundTruth;
    merged.annotations.push_back(std::move(a));
  }
  for (Annotation a : pseudo.annotations) {
    a.source = Source::kPseudo;
    if (!a.alpha) a.alpha = 1.0;
    merged.annotations.push_back(std::move(a));
  }
  merged.canonicalize();
  merged.validate();
  return merged;
}

/// Inverse of merge_datasets: an image belongs to the pseudo part iff it
/// carries a pseudo annotation. The markers added by the merge are removed
/// from labeled annotations.
inline std::pair<Dataset, Dataset> split_by_source(const Dataset& merged) {
  std::set<ImageId> pseudo_images;
  for (const Annotation& a : merged.annotations) {
    if (a.source == Source::kPseudo) pseudo_images.insert(a.image_id);
  }
  Dataset labeled;
  Dataset pseudo;
  labeled.categories = merged.categories;
  pseudo.categories = merged.categories;
  for (const ImageInfo& im : merged.images) {
    (pseudo_images.contains(im.id) ? pseudo : labeled).images.push_back(im);
  }
  for (Annotation a : merged.annotations) {
    if (a.source == Source::kPseudo) {
      pseudo.annotations.push_back(std::move(a));
    } else {
      a.alpha.reset();
      a.source.reset();
      labeled.annotations.push_back(std::move(a));
    }
  }
  return {std::move(labeled), std::move(pseudo)};
}

/// Cardinalities of the labeled set, unlabeled pool, candidate set and
/// pseudo-labeled set.
struct DatasetCounts {
  std::size_t n_labeled = 0;
  std::size_t n_unlabeled = 0;
  std::size_t n_candidates = 0;
  std::size_t n_pseudo = 0;
};

}  // namespace astod
