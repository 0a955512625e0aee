#include "ncps/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <csetjmp>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>

#include "ncps/config.hpp"

namespace ncps {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw DataError("failed writing '" + path + "'");
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

// ---------------------------------------------------------------------------
// PFM

std::string encode_pfm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw DataError("pfm: only 1 or 3 channels are supported");
  std::string out = std::string(img.channels == 3 ? "PF" : "Pf") + "\n" + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n-1.0\n";
  const std::size_t row_bytes = std::size_t(img.width) * std::size_t(img.channels) * sizeof(float);
  const std::size_t header = out.size();
  out.resize(header + row_bytes * std::size_t(img.height));
  for (int r = 0; r < img.height; ++r) {
    const float* src = img.data.data() + std::size_t(img.height - 1 - r) * std::size_t(img.width) * img.channels;
    std::memcpy(out.data() + header + std::size_t(r) * row_bytes, src, row_bytes);
  }
  // Masked pixels are written as NaN so the mask survives a round trip.
  const float nan = std::numeric_limits<float>::quiet_NaN();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (img.mask[i]) continue;
    const std::size_t row = i / std::size_t(img.width), col = i % std::size_t(img.width);
    char* dst = out.data() + header + (std::size_t(img.height) - 1 - row) * row_bytes +
                col * std::size_t(img.channels) * sizeof(float);
    for (int c = 0; c < img.channels; ++c) std::memcpy(dst + std::size_t(c) * sizeof(float), &nan, sizeof(float));
  }
  return out;
}

namespace {

// Reads one whitespace-delimited token, skipping exactly the separators PFM allows.
// `start` receives the offset of the token's first byte.
std::string_view next_token(std::string_view bytes, std::size_t& pos, std::size_t& start) {
  while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  return bytes.substr(start, pos - start);
}

long long parse_int(std::string_view tok, std::size_t offset, const char* what) {
  long long v = 0;
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || r.ec != std::errc() || r.ptr != tok.data() + tok.size())
    throw ParseError(std::string("pfm: malformed ") + what, offset);
  return v;
}

}  // namespace

Image decode_pfm(std::string_view bytes) {
  std::size_t pos = 0, at = 0;
  const std::string_view magic = next_token(bytes, pos, at);
  if (magic != "PF" && magic != "Pf") throw ParseError("pfm: bad magic", 0);
  const int channels = magic == "PF" ? 3 : 1;
  const std::string_view w_tok = next_token(bytes, pos, at);
  const long long w = parse_int(w_tok, at, "width");
  const std::string_view h_tok = next_token(bytes, pos, at);
  const long long h = parse_int(h_tok, at, "height");
  if (w <= 0 || h <= 0) throw ParseError("pfm: non-positive dimensions", at);
  constexpr long long kMaxSide = 1 << 16;
  if (w > kMaxSide || h > kMaxSide) throw ParseError("pfm: dimensions overflow the supported range", at);
  const std::string_view scale_tok = next_token(bytes, pos, at);
  double scale = 0;
  const auto r = std::from_chars(scale_tok.data(), scale_tok.data() + scale_tok.size(), scale);
  if (scale_tok.empty() || r.ec != std::errc() || r.ptr != scale_tok.data() + scale_tok.size() || scale == 0)
    throw ParseError("pfm: malformed scale", at);
  if (!(scale < 0)) throw ParseError("pfm: big-endian data is not supported", at);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw ParseError("pfm: missing separator after header", pos);
  ++pos;
  const std::size_t row_bytes = std::size_t(w) * std::size_t(channels) * sizeof(float);
  const std::size_t need = row_bytes * std::size_t(h);
  if (bytes.size() - pos < need)
    throw ParseError("pfm: truncated pixel data (" + std::to_string(need) + " bytes expected, " +
                         std::to_string(bytes.size() - pos) + " present)",
                     bytes.size());
  if (bytes.size() - pos > need) throw ParseError("pfm: trailing bytes after pixel data", pos + need);
  Image img(int(w), int(h), channels);
  for (long long row = 0; row < h; ++row)
    std::memcpy(img.data.data() + std::size_t(h - 1 - row) * std::size_t(w) * channels,
                bytes.data() + pos + std::size_t(row) * row_bytes, row_bytes);
  for (std::size_t i = 0; i < img.pixel_count(); ++i)
    for (int c = 0; c < channels; ++c)
      if (std::isnan(img.at(i, c))) img.mask[i] = 0;
  return img;
}

void save_pfm(const std::string& path, const Image& img) { write_file(path, encode_pfm(img)); }

Image load_pfm(const std::string& path) {
  const std::string bytes = read_file(path);
  try {
    return decode_pfm(bytes);
  } catch (const ParseError& e) {
    throw DataError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// PNG

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

void png_warn(png_structp, png_const_charp) {}

// Error messages are copied here before libpng longjmps back to the caller.
void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

struct PngPixels {
  int width = 0, height = 0, bit_depth = 0;
  std::vector<unsigned char> data;  // RGB rows, big-endian samples
  std::size_t rowbytes = 0;
};

// Kept free of objects with destructors between setjmp and the libpng calls.
bool read_png_file(std::FILE* f, PngPixels& out, std::string& err) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warn);
  if (!png) {
    err = "out of memory";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    if (err.empty()) err = "out of memory";
    return false;
  }
  png_init_io(png, f);
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  out.width = int(png_get_image_width(png, info));
  out.height = int(png_get_image_height(png, info));
  out.bit_depth = png_get_bit_depth(png, info);
  out.rowbytes = png_get_rowbytes(png, info);
  out.data.resize(out.rowbytes * std::size_t(out.height));
  rows.resize(std::size_t(out.height));
  for (int r = 0; r < out.height; ++r) rows[std::size_t(r)] = out.data.data() + std::size_t(r) * out.rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool write_png_file(std::FILE* f, int width, int height, int channels, const std::vector<unsigned char>& data,
                    std::string& err) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warn);
  if (!png) {
    err = "out of memory";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    if (err.empty()) err = "out of memory";
    return false;
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 16,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t rowbytes = std::size_t(width) * std::size_t(channels) * 2;
  for (int r = 0; r < height; ++r)
    png_write_row(png, const_cast<png_bytep>(data.data() + std::size_t(r) * rowbytes));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  for (std::size_t i = 0; i < suffix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(s[s.size() - suffix.size() + i])) != suffix[i]) return false;
  return true;
}

}  // namespace

Image load_png(const std::string& path, bool inverse_gamma, double exposure) {
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open '" + path + "' for reading");
  PngPixels px;
  std::string err;
  if (!read_png_file(f.get(), px, err)) throw DataError(path + ": png: " + err);
  const int bytes = px.bit_depth == 16 ? 2 : 1;
  const double maxv = px.bit_depth == 16 ? 65535.0 : 255.0;
  Image img(px.width, px.height, 3);
  for (int r = 0; r < px.height; ++r)
    for (int c = 0; c < px.width; ++c)
      for (int k = 0; k < 3; ++k) {
        const unsigned char* p = px.data.data() + std::size_t(r) * px.rowbytes + (std::size_t(c) * 3 + std::size_t(k)) * std::size_t(bytes);
        const double raw = bytes == 2 ? double((p[0] << 8) | p[1]) : double(p[0]);
        double v = raw / maxv;
        if (inverse_gamma) v = srgb_to_linear(v);
        img.at(img.index(r, c), k) = float(v * exposure);
      }
  return img;
}

void save_png16(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw DataError("png: only 1 or 3 channels are supported");
  std::vector<unsigned char> data(img.pixel_count() * std::size_t(img.channels) * 2);
  for (std::size_t i = 0; i < img.pixel_count(); ++i)
    for (int k = 0; k < img.channels; ++k) {
      const double v = std::clamp(double(img.at(i, k)), 0.0, 1.0);
      const auto q = static_cast<unsigned>(std::lround(v * 65535.0));
      const std::size_t o = (i * std::size_t(img.channels) + std::size_t(k)) * 2;
      data[o] = static_cast<unsigned char>(q >> 8);
      data[o + 1] = static_cast<unsigned char>(q & 0xff);
    }
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  std::string err;
  if (!write_png_file(f.get(), img.width, img.height, img.channels, data, err)) throw DataError(path + ": png: " + err);
}

Image load_image(const std::string& path, bool inverse_gamma) {
  if (has_suffix(path, ".pfm")) return load_pfm(path);
  if (has_suffix(path, ".png")) return load_png(path, inverse_gamma);
  throw DataError("unsupported image format: '" + path + "' (expected .pfm or .png)");
}

void save_image(const std::string& path, const Image& img) {
  if (has_suffix(path, ".pfm")) return save_pfm(path, img);
  if (has_suffix(path, ".png")) return save_png16(path, img);
  throw DataError("unsupported image format: '" + path + "' (expected .pfm or .png)");
}

// ---------------------------------------------------------------------------
// Normal maps

Image normal_visualization(const NormalMap& normals) {
  normals.validate();
  Image img(normals.width, normals.height, 3);
  img.mask = normals.mask;
  for (std::size_t i = 0; i < normals.size(); ++i) {
    if (!normals.mask[i]) continue;
    const Vec3d& n = normals.normals[i];
    img.at(i, 0) = float((n.x + 1.0) / 2.0);
    img.at(i, 1) = float((n.y + 1.0) / 2.0);
    img.at(i, 2) = float((-n.z + 1.0) / 2.0);
  }
  return img;
}

void export_normal_map(const NormalMap& normals, const std::string& png_path, const std::string& pfm_path) {
  save_png16(png_path, normal_visualization(normals));
  Image raw(normals.width, normals.height, 3);
  for (std::size_t i = 0; i < normals.size(); ++i) {
    if (!normals.mask[i]) continue;
    raw.at(i, 0) = float(normals.normals[i].x);
    raw.at(i, 1) = float(normals.normals[i].y);
    raw.at(i, 2) = float(normals.normals[i].z);
  }
  save_pfm(pfm_path, raw);
}

NormalMap load_normal_map(const std::string& pfm_path) {
  const Image raw = load_pfm(pfm_path);
  if (raw.channels != 3) throw DataError(pfm_path + ": normal maps have 3 channels");
  NormalMap n(raw.width, raw.height);
  for (std::size_t i = 0; i < n.size(); ++i) {
    const Vec3d v{raw.at(i, 0), raw.at(i, 1), raw.at(i, 2)};
    const double len = norm(v);
    if (!raw.mask[i] || !(len > 0.5)) {
      n.mask[i] = 0;
      n.normals[i] = {0, 0, -1};
      continue;
    }
    // Stored in single precision; renormalize in double.
    n.normals[i] = v / len;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Meshes

Mesh depth_to_mesh(const Image& depth, const CameraModel& cam) {
  if (depth.channels != 1) throw DataError("mesh: depth image must have one channel");
  if (depth.width != cam.width || depth.height != cam.height)
    throw DataError("mesh: depth image does not match the camera");
  const std::size_t n = depth.pixel_count();
  std::vector<int> vid(n, -1);
  Mesh mesh;
  for (int r = 0; r < depth.height; ++r)
    for (int c = 0; c < depth.width; ++c) {
      const std::size_t i = depth.index(r, c);
      const float z = depth.at(i, 0);
      if (!depth.mask[i] || !(z > 0) || !std::isfinite(z)) continue;
      vid[i] = int(mesh.vertices.size());
      mesh.vertices.push_back(back_project(cam, cam.pixel(r, c), double(z)));
    }
  if (mesh.vertices.size() < 3)
    throw DataError("mesh: at least 3 valid depth pixels are required, found " +
                    std::to_string(mesh.vertices.size()));
  // Counter-clockwise as seen from the camera.
  for (int r = 0; r + 1 < depth.height; ++r)
    for (int c = 0; c + 1 < depth.width; ++c) {
      const int a = vid[depth.index(r, c)], b = vid[depth.index(r, c + 1)];
      const int d = vid[depth.index(r + 1, c)], e = vid[depth.index(r + 1, c + 1)];
      if (a < 0 || b < 0 || d < 0 || e < 0) continue;
      mesh.faces.push_back({a, d, b});
      mesh.faces.push_back({b, d, e});
    }
  return mesh;
}

void save_obj(const std::string& path, const Mesh& mesh) {
  std::string out;
  out.reserve(mesh.vertices.size() * 48 + mesh.faces.size() * 24);
  for (const Vec3d& v : mesh.vertices)
    out += "v " + format_double(v.x) + " " + format_double(v.y) + " " + format_double(v.z) + "\n";
  for (const auto& f : mesh.faces)
    out += "f " + std::to_string(f[0] + 1) + " " + std::to_string(f[1] + 1) + " " + std::to_string(f[2] + 1) + "\n";
  write_file(path, out);
}

Mesh load_obj(const std::string& path) {
  std::istringstream in(read_file(path));
  Mesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3d v;
      if (!(ls >> v.x >> v.y >> v.z)) throw DataError(path + ":" + std::to_string(lineno) + ": malformed vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> f{};
      for (int& k : f) {
        std::string tok;
        if (!(ls >> tok)) throw DataError(path + ":" + std::to_string(lineno) + ": malformed face");
        k = std::stoi(tok.substr(0, tok.find('/'))) - 1;
        if (k < 0 || k >= int(mesh.vertices.size()))
          throw DataError(path + ":" + std::to_string(lineno) + ": face index out of range");
      }
      mesh.faces.push_back(f);
    }
  }
  return mesh;
}

Mesh export_mesh(const Image& depth, const CameraModel& cam, const std::string& path) {
  Mesh mesh = depth_to_mesh(depth, cam);
  save_obj(path, mesh);
  return mesh;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'N', 'C', 'P', 'S', 'C', 'K', 'P', 'T'};

template <typename T>
nlohmann::json layout_json(const ParamStore<T>& store) {
  nlohmann::json arrays = nlohmann::json::array();
  for (const ArrayInfo& a : store.arrays())
    arrays.push_back({{"group", a.group}, {"name", a.name}, {"shape", a.shape}, {"offset", a.offset}, {"size", a.size}});
  return arrays;
}

template <typename T>
void check_layout(const ParamStore<T>& store, const nlohmann::json& arrays, const std::string& section) {
  if (!arrays.is_array() || arrays.size() != store.arrays().size())
    throw DataError("checkpoint: " + section + " array count does not match the configuration");
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    const ArrayInfo& a = store.arrays()[i];
    const nlohmann::json& b = arrays[i];
    if (b.at("group") != a.group || b.at("name") != a.name || b.at("shape").get<std::vector<int>>() != a.shape ||
        b.at("offset").get<std::size_t>() != a.offset || b.at("size").get<std::size_t>() != a.size)
      throw DataError("checkpoint: " + section + " array '" + a.name + "' does not match the configuration");
  }
}

template <typename T>
void append_raw(std::string& out, const std::vector<T>& v) {
  const std::size_t at = out.size();
  out.resize(at + v.size() * sizeof(T));
  std::memcpy(out.data() + at, v.data(), v.size() * sizeof(T));
}

template <typename T>
void read_raw(std::string_view payload, std::size_t offset, std::size_t bytes, std::vector<T>& v) {
  if (bytes != v.size() * sizeof(T) || offset + bytes > payload.size())
    throw DataError("checkpoint: parameter block size mismatch");
  std::memcpy(v.data(), payload.data() + offset, bytes);
}

}  // namespace

void save_checkpoint(const std::string& path, const ReconstructionModel<float>* model,
                     const CrosstalkCorrector* ccm) {
  nlohmann::json header = nlohmann::json::object();
  std::string payload;
  if (model) {
    header["model"] = {{"camera", to_json(model->camera)},
                       {"rig", to_json(model->rig)},
                       {"config", to_json(model->config)},
                       {"ablation",
                        {{"no_brdf", model->ablation.no_brdf}, {"shared_channels", model->ablation.shared_channels}}},
                       {"albedo", model->albedo},
                       {"dtype", "f32"},
                       {"arrays", layout_json(model->params)},
                       {"data_offset", payload.size()},
                       {"data_bytes", model->params.size() * sizeof(float)}};
    append_raw(payload, model->params.flat());
  }
  if (ccm) {
    header["ccm"] = {{"config", to_json(ccm->config())},
                     {"dtype", "f64"},
                     {"arrays", layout_json(ccm->params())},
                     {"data_offset", payload.size()},
                     {"data_bytes", ccm->params().size() * sizeof(double)}};
    append_raw(payload, ccm->params().flat());
  }
  const std::string h = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t hlen = h.size();
  out.append(reinterpret_cast<const char*>(&version), sizeof(version));
  out.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out += h;
  out += payload;
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string bytes = read_file(path);
  constexpr std::size_t kFixed = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < kFixed || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError(path + ": not a model checkpoint");
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), sizeof(version));
  std::memcpy(&hlen, bytes.data() + sizeof(kMagic) + sizeof(version), sizeof(hlen));
  if (version != kCheckpointVersion)
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  if (hlen > bytes.size() - kFixed) throw DataError(path + ": truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(kFixed, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": corrupt checkpoint header: " + e.what());
  }
  const std::string_view payload = std::string_view(bytes).substr(kFixed + hlen);
  Checkpoint ck;
  try {
    if (header.contains("model")) {
      const nlohmann::json& m = header["model"];
      AblationConfig ablation;
      ablation.no_brdf = m.at("ablation").at("no_brdf").get<bool>();
      ablation.shared_channels = m.at("ablation").at("shared_channels").get<bool>();
      ReconstructionModel<float> model =
          ReconstructionModel<float>::create(parse_camera_model(m.at("camera")), parse_light_rig(m.at("rig")),
                                             parse_model_config(m.at("config")), ablation, 0);
      model.brdf.set_c0(model.config.brdf.c0);
      model.albedo = m.at("albedo").get<std::array<double, 3>>();
      check_layout(model.params, m.at("arrays"), "model");
      read_raw(payload, m.at("data_offset").get<std::size_t>(), m.at("data_bytes").get<std::size_t>(),
               model.params.flat());
      ck.model = std::move(model);
    }
    if (header.contains("ccm")) {
      const nlohmann::json& c = header["ccm"];
      CrosstalkCorrector corrector(parse_ccm_config(c.at("config")));
      check_layout(corrector.params(), c.at("arrays"), "ccm");
      read_raw(payload, c.at("data_offset").get<std::size_t>(), c.at("data_bytes").get<std::size_t>(),
               corrector.params().flat());
      ck.ccm = std::move(corrector);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed checkpoint header: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(path + ": checkpoint configuration is invalid: " + e.what());
  }
  return ck;
}

// ---------------------------------------------------------------------------
// CSV

void write_loss_history(const std::string& path, const std::vector<HistoryEntry>& history) {
  std::string out = "iteration,sum_l1,mean_l1,wall_time_s\n";
  for (const HistoryEntry& e : history)
    out += std::to_string(e.iteration) + "," + format_double(e.sum_l1) + "," + format_double(e.mean_l1) + "," +
           format_double(e.wall_time_s) + "\n";
  write_file(path, out);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) throw DataError(where + ": bad number '" + s + "'");
  return v;
}

}  // namespace

std::vector<HistoryEntry> read_loss_history(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "iteration,sum_l1,mean_l1,wall_time_s")
    throw DataError(path + ": missing loss history header");
  std::vector<HistoryEntry> out;
  while (std::getline(in, line)) {
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != 4) throw DataError(path + ": expected 4 columns");
    HistoryEntry e;
    e.iteration = int(parse_double(cells[0], path));
    e.sum_l1 = parse_double(cells[1], path);
    e.mean_l1 = parse_double(cells[2], path);
    e.wall_time_s = parse_double(cells[3], path);
    out.push_back(e);
  }
  return out;
}

void write_metrics(const std::string& path, const std::vector<Metric>& metrics) {
  std::string out = "metric,name,value\n";
  for (const Metric& m : metrics) {
    if (m.metric.find(',') != std::string::npos || m.name.find(',') != std::string::npos)
      throw DataError("metrics: commas are not allowed in metric names");
    out += m.metric + "," + m.name + "," + format_double(m.value) + "\n";
  }
  write_file(path, out);
}

std::vector<Metric> read_metrics(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "metric,name,value") throw DataError(path + ": missing metrics header");
  std::vector<Metric> out;
  while (std::getline(in, line)) {
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != 3) throw DataError(path + ": expected 3 columns");
    out.push_back({cells[0], cells[1], parse_double(cells[2], path)});
  }
  return out;
}

void write_brdf_slice(const std::string& path, const ReconstructionModel<float>& model, int steps) {
  if (steps < 2) throw ConfigError("brdf slice: steps must be at least 2");
  std::string out = "theta_h_deg,theta_d_deg,phi_d_deg,r_red,r_green,r_blue\n";
  const double deg = std::numbers::pi / 180.0;
  for (int i = 0; i < steps; ++i)
    for (int j = 0; j < steps; ++j) {
      const double th = 90.0 * i / (steps - 1), td = 90.0 * j / (steps - 1);
      RusinkiewiczAngles a;
      a.theta_h = th * deg;
      a.theta_d = td * deg;
      a.phi_d = 90.0 * deg;
      const BrdfFeatures<double> f = brdf_features<double>(a);
      out += format_double(th) + "," + format_double(td) + ",90";
      for (int c = 0; c < 3; ++c) out += "," + format_double(model.reflectance(c, f));
      out += "\n";
    }
  write_file(path, out);
}

}  // namespace ncps
