#pragma once

#include <map>
#include <set>
#include <vector>

#include "astod/dataset.hpp"
#include "astod/io.hpp"
#include "astod/nms.hpp"
#include "astod/parallel.hpp"
#include "astod/pseudolabel.hpp"

namespace astod {

/// Runs aggregate_views on every image of `pool`, restricted to `views` when
/// it is non-empty. Images whose merged list is empty are left out.
inline CandidateMap aggregate_pool(const ViewPool& pool, const Dataset& images, const NmsOptions& opts,
                                   const std::set<ViewKind>& views = {}, int workers = 1) {
  validate_nms_threshold(opts.iou_threshold);
  const auto index = images.image_index();
  std::vector<const std::pair<const ImageId, std::vector<ViewPredictions>>*> entries;
  entries.reserve(pool.size());
  for (const auto& e : pool) {
    if (!index.contains(e.first)) {
      throw IntegrityError("predictions reference missing image id " + std::to_string(e.first));
    }
    entries.push_back(&e);
  }

  std::vector<std::vector<Detection>> merged(entries.size());
  parallel_for(entries.size(), workers, [&](std::size_t i) {
    const auto& [image, per_view] = *entries[i];
    const ImageDims dims = index.at(image)->dims();
    if (views.empty()) {
      merged[i] = aggregate_views(per_view, dims, opts);
      return;
    }
    std::vector<ViewPredictions> selected;
    for (const ViewPredictions& vp : per_view) {
      if (views.contains(vp.view.kind)) selected.push_back(vp);
    }
    merged[i] = aggregate_views(selected, dims, opts);
  });

  CandidateMap out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!merged[i].empty()) out.emplace(entries[i]->first, std::move(merged[i]));
  }
  return out;
}

inline std::vector<Detection> flatten(const CandidateMap& m) {
  std::vector<Detection> all;
  for (const auto& [_, dets] : m) all.insert(all.end(), dets.begin(), dets.end());
  return all;
}

/// Candidate set as a dataset: one scored annotation per candidate, images
/// restricted to those with candidates.
inline Dataset candidates_to_dataset(const CandidateMap& candidates, const Dataset& pool) {
  Dataset ds;
  ds.categories = pool.categories;
  const auto index = pool.image_index();
  std::int64_t next_id = 1;
  for (const auto& [image, dets] : candidates) {
    ds.images.push_back(*index.at(image));
    for (const Detection& d : dets) {
      ds.annotations.push_back(Annotation{next_id++, image, d.class_id, d.box, d.score, std::nullopt, std::nullopt});
    }
  }
  return ds;
}

/// Reads scored annotations back into per-image candidate lists. Annotations
/// without a score count as score 1.
inline CandidateMap candidates_from_dataset(const Dataset& ds) {
  CandidateMap out;
  for (const Annotation& a : ds.annotations) out[a.image_id].push_back(a.detection());
  for (auto& [_, dets] : out) std::sort(dets.begin(), dets.end(), canonical_less);
  return out;
}

}  // namespace astod
