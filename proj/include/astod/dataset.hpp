#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "astod/error.hpp"
#include "astod/geometry.hpp"
#include "astod/nms.hpp"

namespace astod {

struct ImageInfo {
  ImageId id = 0;
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::string file_name;

  ImageDims dims() const noexcept {
    return ImageDims{static_cast<double>(width), static_cast<double>(height)};
  }

  friend bool operator==(const ImageInfo&, const ImageInfo&) = default;
};

struct Category {
  CategoryId id = 0;
  std::string name;

  friend bool operator==(const Category&, const Category&) = default;
};

/// Provenance of an annotation in a merged training set.
enum class Source { kGroundTruth, kPseudo };

constexpr std::string_view source_tag(Source s) noexcept {
  return s == Source::kGroundTruth ? "gt" : "pseudo";
}

inline Source parse_source(std::string_view s) {
  if (s == "gt") return Source::kGroundTruth;
  if (s == "pseudo") return Source::kPseudo;
  throw ParseError("unknown annotation source '" + std::string(s) + "'");
}

struct Annotation {
  std::int64_t id = 0;
  ImageId image_id = 0;
  CategoryId category_id = 0;
  Box box;  // corner form, original image frame
  std::optional<double> score;
  std::optional<double> alpha;
  std::optional<Source> source;

  Detection detection() const { return Detection{category_id, box, score.value_or(1.0)}; }

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// COCO-style dataset held in corner form.
struct Dataset {
  std::vector<ImageInfo> images;
  std::vector<Annotation> annotations;
  std::vector<Category> categories;

  /// Sorts every table by id.
  void canonicalize() {
    std::sort(images.begin(), images.end(),
              [](const ImageInfo& a, const ImageInfo& b) { return a.id < b.id; });
    std::sort(annotations.begin(), annotations.end(),
              [](const Annotation& a, const Annotation& b) { return a.id < b.id; });
    std::sort(categories.begin(), categories.end(),
              [](const Category& a, const Category& b) { return a.id < b.id; });
  }

  const ImageInfo* find_image(ImageId id) const {
    auto it = std::find_if(images.begin(), images.end(),
                           [id](const ImageInfo& im) { return im.id == id; });
    return it == images.end() ? nullptr : &*it;
  }

  std::map<ImageId, const ImageInfo*> image_index() const {
    std::map<ImageId, const ImageInfo*> idx;
    for (const ImageInfo& im : images) idx.emplace(im.id, &im);
    return idx;
  }

  std::set<CategoryId> category_ids() const {
    std::set<CategoryId> ids;
    for (const Category& c : categories) ids.insert(c.id);
    return ids;
  }

  /// Annotations grouped per image, in annotation order.
  std::map<ImageId, std::vector<Detection>> detections_by_image() const {
    std::map<ImageId, std::vector<Detection>> out;
    for (const Annotation& a : annotations) out[a.image_id].push_back(a.detection());
    return out;
  }

  /// Checks id uniqueness and that every annotation resolves its image and
  /// category. Throws IntegrityError naming the offending id.
  void validate() const {
    std::set<ImageId> image_ids;
    for (const ImageInfo& im : images) {
      if (!image_ids.insert(im.id).second) {
        throw IntegrityError("duplicate image id " + std::to_string(im.id));
      }
      if (im.width <= 0 || im.height <= 0) {
        throw IntegrityError("image " + std::to_string(im.id) + " has non-positive dimensions");
      }
    }
    std::set<CategoryId> cat_ids;
    for (const Category& c : categories) {
      if (!cat_ids.insert(c.id).second) {
        throw IntegrityError("duplicate category id " + std::to_string(c.id));
      }
    }
    std::set<std::int64_t> ann_ids;
    for (const Annotation& a : annotations) {
      if (!ann_ids.insert(a.id).second) {
        throw IntegrityError("duplicate annotation id " + std::to_string(a.id));
      }
      if (!image_ids.contains(a.image_id)) {
        throw IntegrityError("annotation " + std::to_string(a.id) +
                             " references missing image id " + std::to_string(a.image_id));
      }
      if (!cat_ids.contains(a.category_id)) {
        throw IntegrityError("annotation " + std::to_string(a.id) +
                             " references missing category id " + std::to_string(a.category_id));
      }
    }
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

}  // namespace astod
