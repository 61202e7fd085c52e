#include "volrec/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <Eigen/Geometry>

namespace volrec {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::uint8_t> read_file(const fs::path& path, ErrorCode missing_code) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(missing_code, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

// Little-endian append/extract helpers.
template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<std::uint8_t, sizeof(T)> raw{};
  std::memcpy(raw.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.insert(out.end(), raw.begin(), raw.end());
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
  std::array<std::uint8_t, sizeof(T)> raw{};
  std::memcpy(raw.data(), in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  T value;
  std::memcpy(&value, raw.data(), sizeof(T));
  return value;
}

constexpr std::array<char, 8> kMagic = {'V', 'R', 'V', 'O', 'L', 'U', 'M', 'E'};
constexpr std::size_t kHeaderBytes = 8 + 4 + 12 + 12;

// ---- PNG ----------------------------------------------------------------

struct MemReader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

void png_read_mem(png_structp png, png_bytep out, png_size_t len) {
  auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
  if (r->pos + len > r->bytes.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, r->bytes.data() + r->pos, len);
  r->pos += len;
}

void png_write_mem(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void png_flush_mem(png_structp) {}

// Returns false on libpng failure; `err` receives the reason.
bool decode_png(std::span<const std::uint8_t> bytes, Image2D& image, std::string& err) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) {
    err = "png_create_read_struct failed";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  MemReader reader{bytes, 0};
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    err = "libpng decode error";
    return false;
  }
  png_set_read_fn(png, &reader, png_read_mem);
  png_read_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_destroy_read_struct(&png, &info, nullptr);
    err = "PNG is not grayscale";
    return false;
  }
  if (depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
    depth = 8;
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const auto stride = png_get_rowbytes(png, info);
  pixels.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  image.resize(height, width);
  for (png_uint_32 y = 0; y < height; ++y) {
    for (png_uint_32 x = 0; x < width; ++x) {
      if (depth == 16) {
        const auto* p = rows[y] + 2 * x;
        image(y, x) = static_cast<float>((p[0] << 8 | p[1]) / 65535.0);
      } else {
        image(y, x) = static_cast<float>(rows[y][x] / 255.0);
      }
    }
  }
  return true;
}

std::vector<std::uint8_t> encode_png_depth(const Image2D& image, int depth) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::Io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  const auto width = static_cast<png_uint_32>(image.cols());
  const auto height = static_cast<png_uint_32>(image.rows());
  const std::size_t bpp = depth == 16 ? 2 : 1;
  std::vector<png_byte> pixels(bpp * width * height);
  for (png_uint_32 y = 0; y < height; ++y) {
    for (png_uint_32 x = 0; x < width; ++x) {
      const double v = std::clamp(static_cast<double>(image(y, x)), 0.0, 1.0);
      auto* p = pixels.data() + bpp * (y * width + x);
      if (depth == 16) {
        const auto s = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        p[0] = static_cast<png_byte>(s >> 8);
        p[1] = static_cast<png_byte>(s & 0xff);
      } else {
        p[0] = static_cast<png_byte>(std::lround(v * 255.0));
      }
    }
  }
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + bpp * y * width;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "libpng encode error");
  }
  png_set_write_fn(png, &out, png_write_mem, png_flush_mem);
  png_set_IHDR(png, info, width, height, depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // Fixed compression settings keep encoded bytes reproducible.
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

// ---- PGM ----------------------------------------------------------------

bool decode_pgm(std::span<const std::uint8_t> bytes, Image2D& image, std::string& err) {
  std::size_t pos = 2;
  auto next_token = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
    }
    return any ? v : -1;
  };
  const long w = next_token(), h = next_token(), maxval = next_token();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    err = "bad PGM header";
    return false;
  }
  ++pos;  // single whitespace before raster
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (pos + bpp * w * h > bytes.size()) {
    err = "truncated PGM raster";
    return false;
  }
  image.resize(h, w);
  const double scale = bpp == 2 ? 65535.0 : 255.0;
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const auto* p = bytes.data() + pos + bpp * (y * w + x);
      const unsigned v = bpp == 2 ? (p[0] << 8 | p[1]) : p[0];
      image(y, x) = static_cast<float>(v / scale);
    }
  return true;
}

}  // namespace

// ---- images ---------------------------------------------------------------

Image2D read_image(const fs::path& path) {
  const auto bytes = read_file(path, ErrorCode::ImageDecode);
  Image2D image;
  std::string err = "unrecognized image format";
  bool ok = false;
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) {
    ok = decode_png(bytes, image, err);
  } else if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
    ok = decode_pgm(bytes, image, err);
  }
  if (!ok) throw Error(ErrorCode::ImageDecode, path.string() + ": " + err);
  return image;
}

std::vector<std::uint8_t> encode_png(const Image2D& image) { return encode_png_depth(image, 8); }

void write_png(const fs::path& path, const Image2D& image) { write_file(path, encode_png_depth(image, 8)); }

void write_png16(const fs::path& path, const Image2D& image) { write_file(path, encode_png_depth(image, 16)); }

// ---- manifest -------------------------------------------------------------

StackManifest parse_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::ManifestParse, "cannot open manifest " + manifest_path.string());
  StackManifest m;
  const fs::path base = manifest_path.parent_path();
  std::set<fs::path> seen;
  bool have_gap = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ManifestParse, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::istringstream vs(value);
    if (key == "slice") {
      fs::path p = value;
      if (p.is_relative()) p = base / p;
      if (!seen.insert(p.lexically_normal()).second)
        throw Error(ErrorCode::ManifestParse, "duplicate slice path " + value);
      m.slice_files.push_back(p);
    } else if (key == "pixel_spacing") {
      if (!(vs >> m.pixel_spacing_mm.x())) throw Error(ErrorCode::ManifestParse, "bad pixel_spacing");
      if (!(vs >> m.pixel_spacing_mm.y())) m.pixel_spacing_mm.y() = m.pixel_spacing_mm.x();
    } else if (key == "slice_gap") {
      if (!(vs >> m.slice_gap_mm)) throw Error(ErrorCode::ManifestParse, "bad slice_gap");
      have_gap = true;
    } else if (key == "axis") {
      m.axis_label = value;
    } else if (key == "value_range") {
      std::array<double, 2> r{};
      if (!(vs >> r[0] >> r[1]) || !(r[1] > r[0])) throw Error(ErrorCode::ManifestParse, "bad value_range");
      m.value_range = r;
    } else {
      throw Error(ErrorCode::ManifestParse, "unknown key '" + key + "'");
    }
  }
  if (m.slice_files.empty()) throw Error(ErrorCode::ManifestParse, "manifest lists no slices");
  if (!have_gap) throw Error(ErrorCode::ManifestParse, "manifest lacks slice_gap");
  return m;
}

void write_manifest(const fs::path& manifest_path, const StackManifest& m) {
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + manifest_path.string());
  out << std::setprecision(17);
  out << "pixel_spacing = " << m.pixel_spacing_mm.x() << ' ' << m.pixel_spacing_mm.y() << '\n';
  out << "slice_gap = " << m.slice_gap_mm << '\n';
  out << "axis = " << m.axis_label << '\n';
  if (m.value_range) out << "value_range = " << (*m.value_range)[0] << ' ' << (*m.value_range)[1] << '\n';
  const fs::path base = manifest_path.parent_path();
  for (const auto& p : m.slice_files) out << "slice = " << p.lexically_relative(base).generic_string() << '\n';
}

SliceStack load_stack(const fs::path& manifest_path) {
  const StackManifest m = parse_manifest(manifest_path);
  SliceStack raw;
  raw.pixel_spacing = m.pixel_spacing_mm;
  raw.slice_gap_mm = m.slice_gap_mm;
  try {
    raw.axis = axis_from_string(m.axis_label);
  } catch (const Error&) {
    throw Error(ErrorCode::ManifestParse, "unknown axis '" + m.axis_label + "'");
  }
  for (const auto& f : m.slice_files) raw.slices.push_back(read_image(f));
  for (const auto& s : raw.slices)
    if (s.rows() != raw.slices.front().rows() || s.cols() != raw.slices.front().cols())
      throw Error(ErrorCode::DimensionMismatch, "slice dimensions differ within manifest");
  if (!(m.slice_gap_mm > 0) || !(m.pixel_spacing_mm.array() > 0).all())
    throw Error(ErrorCode::NonPositiveSpacing, "manifest spacing must be positive");
  if (m.value_range) return normalize_stack(std::move(raw), (*m.value_range)[0], (*m.value_range)[1]);
  return normalize_stack(std::move(raw));
}

// ---- volumes --------------------------------------------------------------

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<std::uint8_t> serialize_volume(const VolumeGrid& grid) {
  if (grid.empty()) throw Error(ErrorCode::InvalidGrid, "cannot save an empty grid");
  const auto n = static_cast<std::size_t>(grid.size());
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 4 * n + (n + 7) / 8 + 8);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(out, kVolumeFormatVersion);
  for (int i = 0; i < 3; ++i) put_le<std::int32_t>(out, grid.dims()[i]);
  for (int i = 0; i < 3; ++i) put_le<std::int32_t>(out, grid.origin()[i]);
  for (std::size_t i = 0; i < n; ++i) {
    // Missing voxels are written as the canonical quiet NaN.
    const std::uint32_t bits = grid.is_missing(static_cast<Eigen::Index>(i))
                                   ? 0x7fc00000u
                                   : std::bit_cast<std::uint32_t>(grid.data()[static_cast<Eigen::Index>(i)]);
    put_le<std::uint32_t>(out, bits);
  }
  std::vector<std::uint8_t> packed((n + 7) / 8, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (grid.mask()[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  out.insert(out.end(), packed.begin(), packed.end());
  put_le<std::uint64_t>(out, fnv1a64(out));
  return out;
}

VolumeGrid deserialize_volume(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw Error(ErrorCode::CorruptHeader, "missing or truncated volume header");
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kVolumeFormatVersion)
    throw Error(ErrorCode::UnsupportedVersion, "volume format version " + std::to_string(version));
  Vec3i dims, origin;
  for (int i = 0; i < 3; ++i) dims[i] = get_le<std::int32_t>(bytes, 12 + 4 * i);
  for (int i = 0; i < 3; ++i) origin[i] = get_le<std::int32_t>(bytes, 24 + 4 * i);
  if ((dims.array() <= 0).any()) throw Error(ErrorCode::CorruptHeader, "non-positive dimensions");
  const auto n = static_cast<std::size_t>(dims.x()) * dims.y() * dims.z();
  const std::size_t expected = kHeaderBytes + 4 * n + (n + 7) / 8 + 8;
  if (bytes.size() != expected)
    throw Error(ErrorCode::CorruptHeader, "file size " + std::to_string(bytes.size()) + " does not match header");
  const auto stored = get_le<std::uint64_t>(bytes, expected - 8);
  if (stored != fnv1a64(bytes.first(expected - 8))) throw Error(ErrorCode::ChecksumMismatch, "volume checksum");

  VolumeGrid grid(dims, 0.0f, origin);
  const std::size_t mask_at = kHeaderBytes + 4 * n;
  for (std::size_t i = 0; i < n; ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    if (bytes[mask_at + i / 8] & (1u << (i % 8))) {
      grid.set_missing(idx);
    } else {
      grid.set(idx, std::bit_cast<float>(get_le<std::uint32_t>(bytes, kHeaderBytes + 4 * i)));
    }
  }
  return grid;
}

void save_volume(const VolumeGrid& grid, const fs::path& path) { write_file(path, serialize_volume(grid)); }

VolumeGrid load_volume(const fs::path& path) { return deserialize_volume(read_file(path, ErrorCode::Io)); }

std::uint64_t volume_checksum(const VolumeGrid& grid) { return fnv1a64(serialize_volume(grid)); }

// ---- meshes ---------------------------------------------------------------

std::string encode_obj(const TriangleMesh& mesh) {
  std::ostringstream out;
  out << std::setprecision(9);
  out << "# volrec mesh: " << mesh.vertex_count() << " vertices, " << mesh.triangle_count() << " triangles\n";
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& n : mesh.normals) out << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
  const bool with_normals = mesh.normals.size() == mesh.vertices.size() && !mesh.normals.empty();
  for (const auto& t : mesh.triangles) {
    out << 'f';
    for (auto i : t) {
      out << ' ' << (i + 1);
      if (with_normals) out << "//" << (i + 1);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<std::uint8_t> encode_stl(const TriangleMesh& mesh) {
  std::vector<std::uint8_t> out(80, 0);
  const std::string header = "volrec binary STL";
  std::copy(header.begin(), header.end(), out.begin());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(mesh.triangles.size()));
  for (const auto& t : mesh.triangles) {
    const Eigen::Vector3f& a = mesh.vertices[t[0]];
    const Eigen::Vector3f& b = mesh.vertices[t[1]];
    const Eigen::Vector3f& c = mesh.vertices[t[2]];
    Eigen::Vector3f n = (b - a).cross(c - a);
    if (n.norm() > 0) n.normalize();
    for (const Eigen::Vector3f& v : {n, a, b, c})
      for (int i = 0; i < 3; ++i) put_le<float>(out, v[i]);
    put_le<std::uint16_t>(out, 0);
  }
  return out;
}

void export_mesh(const TriangleMesh& mesh, MeshFormat format, const fs::path& path) {
  validate(mesh);
  if (format == MeshFormat::obj) {
    const std::string text = encode_obj(mesh);
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  } else {
    write_file(path, encode_stl(mesh));
  }
}

TriangleMesh read_obj(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Eigen::Vector3f v;
      ls >> v.x() >> v.y() >> v.z();
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<std::uint32_t, 3> t{};
      for (auto& i : t) {
        std::string tok;
        ls >> tok;
        i = static_cast<std::uint32_t>(std::stoul(tok.substr(0, tok.find('/')))) - 1;
      }
      mesh.triangles.push_back(t);
    }
  }
  return mesh;
}

}  // namespace volrec
