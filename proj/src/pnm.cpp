#include "sdfas/pnm.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <string>
#include <vector>

#include "sdfas/errors.hpp"

namespace sdfas {

void save_pnm(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3)
    throw ShapeError("pnm: images need 1 or 3 channels, got " + std::to_string(image.channels));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  // planar to interleaved
  const std::size_t plane = image.width * image.height;
  std::vector<char> buf(plane * image.channels);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < image.channels; ++c)
      buf[i * image.channels + c] = static_cast<char>(image.pixels[c * plane + i]);
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw DataError("write failed: " + path.string());
}

namespace {

std::size_t header_number(std::istream& is, const std::string& where) {
  // skips whitespace and '#' comments
  int ch;
  while ((ch = is.peek()) != EOF) {
    if (ch == '#') {
      std::string dummy;
      std::getline(is, dummy);
    } else if (std::isspace(ch)) {
      is.get();
    } else {
      break;
    }
  }
  std::size_t v = 0;
  if (!(is >> v)) throw DataError(where + ": malformed header");
  return v;
}

}  // namespace

Tensor load_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  const std::string where = path.string();
  if (!is) throw DataError("cannot open " + where);
  char magic[2];
  if (!is.read(magic, 2) || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    throw DataError(where + ": not a binary PGM/PPM file");
  const std::size_t channels = magic[1] == '5' ? 1 : 3;
  const std::size_t w = header_number(is, where);
  const std::size_t h = header_number(is, where);
  const std::size_t maxval = header_number(is, where);
  if (w == 0 || h == 0 || maxval != 255) throw DataError(where + ": only nonempty 8-bit images are supported");
  is.get();  // single whitespace before the raster
  std::vector<char> buf(w * h * channels);
  if (!is.read(buf.data(), static_cast<std::streamsize>(buf.size()))) throw DataError(where + ": truncated raster");
  Tensor t({channels, h, w});
  const std::size_t plane = w * h;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < channels; ++c)
      t[c * plane + i] = static_cast<double>(static_cast<unsigned char>(buf[i * channels + c]));
  return t;
}

FrameSequence load_frame_dir(const std::filesystem::path& dir, std::optional<Modality> modality) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(e.path());
  }
  if (files.empty()) throw DataError("no .pgm or .ppm frames in " + dir.string());
  std::sort(files.begin(), files.end());
  FrameSequence seq;
  for (const auto& f : files) {
    seq.frames.push_back(load_pnm(f));
    if (seq.frames.back().shape() != seq.frames.front().shape())
      throw DataError(f.string() + ": frame size differs from " + files.front().string());
  }
  const std::size_t channels = seq.frames.front().dim(0);
  seq.modality = modality.value_or(channels == 3 ? Modality::kColor : Modality::kDepth);
  if (modality_channels(seq.modality) != channels)
    throw DataError("frames in " + dir.string() + " have " + std::to_string(channels) + " channels, " +
                    std::string(modality_name(seq.modality)) + " needs " +
                    std::to_string(modality_channels(seq.modality)));
  return seq;
}

}  // namespace sdfas
