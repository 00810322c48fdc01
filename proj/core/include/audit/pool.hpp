#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "audit/image.hpp"

namespace audit {

// One context for the auditor: a source image and, when the pool is
// labeled, the question that came with it.
struct PoolItem {
  std::string id;
  ImageRef image;
  std::optional<std::string> question;
};

void to_json(nlohmann::json& j, const PoolItem& p);
void from_json(const nlohmann::json& j, PoolItem& p);

struct PoolFilter {
  int min_side = 64;        // raster images smaller than this are skipped
  bool dedup_content = true;
};

// Reads a pool directory. `*.json` files hold scene items; `*.png`, `*.jpg`
// and `*.jpeg` files become remote-only source images whose size is read
// from the file header. Items are ordered by file name. Throws EmptyPool.
std::vector<PoolItem> load_pool(const std::filesystem::path& dir, const PoolFilter& filter = {});

struct RasterSize {
  int width = 0;
  int height = 0;
};
std::optional<RasterSize> read_raster_size(const std::filesystem::path& file);

// Seeded synthetic pool. With `with_questions`, each item carries a source
// question drawn from the probe templates.
std::vector<PoolItem> make_mock_pool(std::size_t n, std::uint64_t seed, bool with_questions = false,
                                     int template_count = 6);
void write_pool(const std::filesystem::path& dir, const std::vector<PoolItem>& items);

}  // namespace audit
