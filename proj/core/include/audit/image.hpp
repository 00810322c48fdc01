#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "audit/scene.hpp"

namespace audit {

enum class ImageOrigin { Source, Generated, Edited };

std::string_view to_string(ImageOrigin o);
ImageOrigin image_origin_from_string(std::string_view s);

// The uri doubles as the image id.
struct ImageRef {
  std::string uri;
  int width = 0;
  int height = 0;
  ImageOrigin origin = ImageOrigin::Source;
  std::optional<std::string> parent;
  std::optional<SyntheticScene> scene;

  const std::string& id() const { return uri; }
  // Structural invariants: positive size and parent set iff edited.
  bool well_formed() const;
};

void to_json(nlohmann::json& j, const ImageRef& r);
void from_json(const nlohmann::json& j, ImageRef& r);

// Registry of every image the gateway has seen, for lineage queries.
// Children can only be registered after their parent, so parent chains
// cannot form cycles.
class ImageStore {
 public:
  // Throws Error(ImageUnresolvable) if an edited image's parent is unknown.
  void put(const ImageRef& ref);
  std::optional<ImageRef> get(const std::string& uri) const;
  bool contains(const std::string& uri) const;
  // Follows parent links to the first source or generated ancestor.
  std::string lineage_root(const std::string& uri) const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, ImageRef> images_;
};

}  // namespace audit
