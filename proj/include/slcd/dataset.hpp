#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "slcd/imageio.hpp"
#include "slcd/toydata.hpp"

namespace slcd {

// A dataset directory holds manifest.txt with one "id domain seed" line per
// sample plus sample_<id>.png / sample_<id>_mask.png pairs.

inline std::string sample_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", index);
  return buf;
}

inline void save_dataset(const std::string& dir,
                         const std::vector<ToySample>& samples,
                         bool force = false) {
  require(!samples.empty(), "save_dataset: nothing to save");
  namespace fs = std::filesystem;
  fs::path root(dir);
  if (fs::exists(root)) {
    require(fs::is_directory(root), "save_dataset: not a directory: " + dir);
    if (!fs::is_empty(root))
      require(force, "save_dataset: refusing to write into non-empty " + dir +
                         " (use force)");
  } else {
    fs::create_directories(root);
  }

  std::ofstream manifest(root / "manifest.txt");
  require(manifest.good(), "save_dataset: cannot write manifest in " + dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ToySample& s = samples[i];
    std::string id = sample_id(static_cast<int>(i));
    write_image_png((root / ("sample_" + id + ".png")).string(), s.image,
                    kImageH, kImageW);
    write_mask_png((root / ("sample_" + id + "_mask.png")).string(), s.mask,
                   kImageH, kImageW);
    manifest << id << ' ' << domain_name(s.domain) << ' ' << s.seed << '\n';
  }
  require(manifest.good(), "save_dataset: manifest write failed in " + dir);
}

inline std::vector<ToySample> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  fs::path root(dir);
  std::ifstream manifest(root / "manifest.txt");
  require(manifest.good(), "load_dataset: no manifest.txt in " + dir);
  std::vector<ToySample> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, domain;
    std::uint64_t seed = 0;
    require(static_cast<bool>(ss >> id >> domain >> seed),
            "load_dataset: malformed manifest line: " + line);
    require(domain == "sim" || domain == "real",
            "load_dataset: unknown domain in manifest: " + domain);
    ToySample s;
    s.domain = domain == "sim" ? Domain::simulated : Domain::real;
    s.seed = seed;
    fs::path img = root / ("sample_" + id + ".png");
    if (!fs::exists(img)) img = root / ("sample_" + id + ".ppm");
    fs::path msk = root / ("sample_" + id + "_mask.png");
    if (!fs::exists(msk)) msk = root / ("sample_" + id + "_mask.pgm");
    s.image = read_image_any(img.string(), kImageH, kImageW);
    s.mask = read_mask_any(msk.string(), kImageH, kImageW);
    for (int label : s.mask)
      require(label >= 0 && label < kNumClasses,
              "load_dataset: mask label out of range in sample " + id);
    out.push_back(std::move(s));
  }
  require(!out.empty(), "load_dataset: empty manifest in " + dir);
  return out;
}

}  // namespace slcd
