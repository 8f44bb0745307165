// SPDX-License-Identifier: Apache-2.0
#include "concepthash/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "concepthash/errors.hpp"

namespace concepthash {

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

std::vector<int> Dataset::families() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.family);
  return out;
}

bool Dataset::has_family() const {
  return !samples.empty() && std::all_of(samples.begin(), samples.end(), [](const Sample& s) { return s.family >= 0; });
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw DataError("write_png: only 1 or 3 channels supported");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> buffer(image.pixels.size());
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        buffer[(y * image.width + x) * image.channels + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw DataError("write_png " + path.string() + ": " + png.message);
}

Image read_png(const std::filesystem::path& path, std::size_t channels) {
  if (channels != 1 && channels != 3) throw DataError("read_png: only 1 or 3 channels supported");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw DataError("read_png " + path.string() + ": " + png.message);
  png.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr))
    throw DataError("read_png " + path.string() + ": " + png.message);
  Image img(channels, png.height, png.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        img.at(c, y, x) = buffer[(y * img.width + x) * channels + c] / 255.0;
  return img;
}

void save_dataset_dir(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  nlohmann::json items = nlohmann::json::array();
  char name[32];
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const Sample& s = data.samples[i];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    write_png(dir / name, s.image);
    nlohmann::json item = {{"file", name}, {"label", s.label}};
    if (s.family >= 0) item["family"] = s.family;
    nlohmann::json marks = nlohmann::json::array();
    for (const auto& l : s.landmarks) marks.push_back({l.x, l.y});
    item["landmarks"] = std::move(marks);
    items.push_back(std::move(item));
  }
  nlohmann::json manifest = {{"num_classes", data.num_classes}, {"class_names", data.class_names}, {"items", items}};
  if (!data.samples.empty()) {
    manifest["image_size"] = data.samples.front().image.width;
    manifest["channels"] = data.samples.front().image.channels;
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write manifest in " + dir.string());
  out << manifest.dump(1) << '\n';
}

Dataset load_dataset_dir(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("dataset " + dir.string() + ": manifest.json not found");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
    Dataset data;
    data.num_classes = manifest.at("num_classes").get<std::size_t>();
    data.class_names = manifest.value("class_names", std::vector<std::string>{});
    const std::size_t channels = manifest.value("channels", std::size_t{3});
    for (const auto& item : manifest.at("items")) {
      Sample s;
      s.image = read_png(dir / item.at("file").get<std::string>(), channels);
      s.label = item.at("label").get<int>();
      s.family = item.value("family", -1);
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= data.num_classes)
        throw DataError("dataset " + dir.string() + ": label " + std::to_string(s.label) + " out of range");
      for (const auto& l : item.value("landmarks", nlohmann::json::array()))
        s.landmarks.push_back({l.at(0).get<double>(), l.at(1).get<double>()});
      data.samples.push_back(std::move(s));
    }
    return data;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset " + dir.string() + ": malformed manifest: " + e.what());
  }
}

}  // namespace concepthash
