#include "audit/image.hpp"

#include "audit/error.hpp"

namespace audit {

std::string_view to_string(ImageOrigin o) {
  switch (o) {
    case ImageOrigin::Source: return "source";
    case ImageOrigin::Generated: return "generated";
    case ImageOrigin::Edited: return "edited";
  }
  return "source";
}

ImageOrigin image_origin_from_string(std::string_view s) {
  if (s == "source") return ImageOrigin::Source;
  if (s == "generated") return ImageOrigin::Generated;
  if (s == "edited") return ImageOrigin::Edited;
  throw Error(ErrorCode::FormatError, "unknown image origin '" + std::string(s) + "'");
}

bool ImageRef::well_formed() const {
  if (uri.empty() || width <= 0 || height <= 0) return false;
  if (origin == ImageOrigin::Edited) return parent.has_value();
  if (origin == ImageOrigin::Source) return !parent.has_value();
  return true;
}

void to_json(nlohmann::json& j, const ImageRef& r) {
  j = {{"uri", r.uri},
       {"width", r.width},
       {"height", r.height},
       {"origin", std::string(to_string(r.origin))}};
  if (r.parent) j["parent"] = *r.parent;
  if (r.scene) j["scene"] = *r.scene;
}

void from_json(const nlohmann::json& j, ImageRef& r) {
  r = {};
  r.uri = j.at("uri").get<std::string>();
  r.width = j.value("width", 0);
  r.height = j.value("height", 0);
  r.origin = image_origin_from_string(j.value("origin", "source"));
  if (j.contains("parent") && !j["parent"].is_null()) r.parent = j["parent"].get<std::string>();
  if (j.contains("scene") && !j["scene"].is_null()) r.scene = j["scene"].get<SyntheticScene>();
}

void ImageStore::put(const ImageRef& ref) {
  std::lock_guard lock(mu_);
  if (ref.parent && !images_.count(*ref.parent))
    throw Error(ErrorCode::ImageUnresolvable, "parent '" + *ref.parent + "' not registered");
  images_.insert_or_assign(ref.uri, ref);
}

std::optional<ImageRef> ImageStore::get(const std::string& uri) const {
  std::lock_guard lock(mu_);
  auto it = images_.find(uri);
  if (it == images_.end()) return std::nullopt;
  return it->second;
}

bool ImageStore::contains(const std::string& uri) const {
  std::lock_guard lock(mu_);
  return images_.count(uri) > 0;
}

std::string ImageStore::lineage_root(const std::string& uri) const {
  std::lock_guard lock(mu_);
  std::string cur = uri;
  for (std::size_t hops = 0; hops <= images_.size(); ++hops) {
    auto it = images_.find(cur);
    if (it == images_.end() || !it->second.parent || it->second.origin != ImageOrigin::Edited)
      return cur;
    cur = *it->second.parent;
  }
  throw Error(ErrorCode::ImageUnresolvable, "lineage cycle at '" + uri + "'");
}

std::size_t ImageStore::size() const {
  std::lock_guard lock(mu_);
  return images_.size();
}

}  // namespace audit
