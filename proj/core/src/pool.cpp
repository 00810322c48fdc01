#include "audit/pool.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>

#include "audit/error.hpp"
#include "audit/mock_models.hpp"
#include "audit/util.hpp"

namespace audit {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const PoolItem& p) {
  j = {{"id", p.id}, {"image", p.image}};
  if (p.question) j["question"] = *p.question;
}

void from_json(const nlohmann::json& j, PoolItem& p) {
  p = {};
  p.id = j.at("id").get<std::string>();
  p.image = j.at("image").get<ImageRef>();
  if (j.contains("question") && j["question"].is_string()) p.question = j["question"].get<std::string>();
}

namespace {

std::string read_bytes(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int be16(const std::string& b, std::size_t i) {
  return (static_cast<unsigned char>(b[i]) << 8) | static_cast<unsigned char>(b[i + 1]);
}

}  // namespace

std::optional<RasterSize> read_raster_size(const fs::path& file) {
  const std::string b = read_bytes(file);
  if (b.size() >= 24 && b.compare(0, 8, "\x89PNG\r\n\x1a\n") == 0) {
    auto be32 = [&](std::size_t i) { return (be16(b, i) << 16) | be16(b, i + 2); };
    return RasterSize{be32(16), be32(20)};
  }
  if (b.size() >= 4 && static_cast<unsigned char>(b[0]) == 0xFF && static_cast<unsigned char>(b[1]) == 0xD8) {
    std::size_t i = 2;
    while (i + 9 < b.size()) {
      if (static_cast<unsigned char>(b[i]) != 0xFF) return std::nullopt;
      const int marker = static_cast<unsigned char>(b[i + 1]);
      if (marker == 0xFF) {
        ++i;
        continue;
      }
      const bool sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC;
      if (sof) return RasterSize{be16(b, i + 7), be16(b, i + 5)};
      i += 2 + static_cast<std::size_t>(be16(b, i + 2));
    }
  }
  return std::nullopt;
}

std::vector<PoolItem> load_pool(const fs::path& dir, const PoolFilter& filter) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::EmptyPool, "pool directory '" + dir.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  std::vector<PoolItem> items;
  std::set<std::uint64_t> seen;
  for (const auto& f : files) {
    const std::string ext = to_lower(f.extension().string());
    if (ext == ".json") {
      std::ifstream in(f);
      nlohmann::json j;
      try {
        in >> j;
        items.push_back(j.get<PoolItem>());
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, f.string() + ": " + e.what());
      }
      continue;
    }
    if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") continue;
    auto size = read_raster_size(f);
    if (!size || size->width < filter.min_side || size->height < filter.min_side) continue;
    if (filter.dedup_content && !seen.insert(fnv1a64(read_bytes(f))).second) continue;
    PoolItem item;
    item.id = f.stem().string();
    item.image.uri = "file://" + fs::absolute(f).string();
    item.image.width = size->width;
    item.image.height = size->height;
    items.push_back(std::move(item));
  }
  if (items.empty()) throw Error(ErrorCode::EmptyPool, "pool '" + dir.string() + "' has no usable images");
  return items;
}

std::vector<PoolItem> make_mock_pool(std::size_t n, std::uint64_t seed, bool with_questions, int template_count) {
  std::vector<PoolItem> items;
  items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PoolItem item;
    char id[32];
    std::snprintf(id, sizeof(id), "img-%05zu", i);
    item.id = id;
    item.image.uri = "mock://pool/" + hex64(derive_seed(seed, i));
    item.image.width = kMockImageSize;
    item.image.height = kMockImageSize;
    item.image.scene = random_scene(derive_seed(seed, i, 1));
    if (with_questions) {
      Rng rng(derive_seed(seed, i, 2));
      const auto kind = probe_kind(static_cast<int>(rng.below(static_cast<std::size_t>(template_count))));
      item.question = MockAuditor::propose_question(kind, *item.image.scene, rng);
    }
    items.push_back(std::move(item));
  }
  return items;
}

void write_pool(const fs::path& dir, const std::vector<PoolItem>& items) {
  fs::create_directories(dir);
  for (const auto& item : items) {
    std::ofstream out(dir / (item.id + ".json"));
    out << nlohmann::json(item).dump() << "\n";
    if (!out) throw Error(ErrorCode::FormatError, "cannot write pool item " + item.id);
  }
}

}  // namespace audit
