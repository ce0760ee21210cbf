#include "msvae/latentio.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "msvae/text.hpp"

namespace msvae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<
      std::conditional_t<sizeof(T) == 8, std::int64_t,
                         std::conditional_t<sizeof(T) == 4, std::int32_t,
                                            std::int8_t>>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
  }
}

template <typename T>
T get_le(std::string_view bytes, std::size_t offset) {
  using U = std::make_unsigned_t<
      std::conditional_t<sizeof(T) == 8, std::int64_t,
                         std::conditional_t<sizeof(T) == 4, std::int32_t,
                                            std::int8_t>>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<U>(static_cast<unsigned char>(bytes[offset + i]))
            << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

[[noreturn]] void io_fail(const fs::path& path, const std::string& what) {
  throw IoError(what + " '" + path.string() + "': " + std::strerror(errno));
}

json tensor_entry(const Param& p, std::uint64_t offset) {
  return json{{"name", p.name},
              {"rows", p.value.rows()},
              {"cols", p.value.cols()},
              {"offset", offset},
              {"trainable", p.trainable}};
}

void append_tensor(std::string& blob, const Param& p) {
  for (Index i = 0; i < p.value.size(); ++i) put_le<double>(blob, p.value.data()[i]);
}

json layers_entry(const Mlp& mlp, std::string& blob) {
  json layers = json::array();
  for (const DenseLayer& layer : mlp.layers()) {
    json entry;
    entry["activation"] = std::string(to_string(layer.activation));
    entry["weight"] = tensor_entry(layer.weight, blob.size());
    append_tensor(blob, layer.weight);
    entry["bias"] = tensor_entry(layer.bias, blob.size());
    append_tensor(blob, layer.bias);
    layers.push_back(std::move(entry));
  }
  return layers;
}

template <typename T>
T required(const json& j, const char* key, const fs::path& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(FormatErrorKind::kBadField,
                      where.string() + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::kBadField,
                      where.string() + ": field '" + key + "': " + e.what());
  }
}

Param read_tensor(const json& entry, std::string_view blob,
                  const fs::path& where) {
  const auto name = required<std::string>(entry, "name", where);
  const auto rows = required<std::int64_t>(entry, "rows", where);
  const auto cols = required<std::int64_t>(entry, "cols", where);
  const auto offset = required<std::uint64_t>(entry, "offset", where);
  const auto trainable = required<bool>(entry, "trainable", where);
  if (rows < 0 || cols < 0) {
    throw IntegrityError(where.string() + ": tensor '" + name +
                         "' has negative shape");
  }
  const std::uint64_t count =
      static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols);
  if (offset < sizeof(kWeightsMagic) || offset > blob.size() ||
      count > (blob.size() - offset) / 8) {
    throw IntegrityError(where.string() + ": tensor '" + name +
                         "' lies outside the weights blob");
  }
  Matrix value(rows, cols);
  for (std::uint64_t i = 0; i < count; ++i) {
    value.data()[i] = get_le<double>(blob, offset + 8 * i);
  }
  return Param(name, std::move(value), trainable);
}

Mlp read_layers(const json& layers, std::string_view blob, const fs::path& where,
                std::uint64_t& consumed) {
  if (!layers.is_array()) {
    throw FormatError(FormatErrorKind::kBadField,
                      where.string() + ": layers must be an array");
  }
  std::vector<DenseLayer> out;
  for (const json& entry : layers) {
    DenseLayer layer;
    try {
      layer.activation =
          parse_activation(required<std::string>(entry, "activation", where));
    } catch (const ConfigError& e) {
      throw FormatError(FormatErrorKind::kBadField,
                        where.string() + ": " + e.what());
    }
    layer.weight = read_tensor(required<json>(entry, "weight", where), blob, where);
    layer.bias = read_tensor(required<json>(entry, "bias", where), blob, where);
    consumed += 8 * static_cast<std::uint64_t>(layer.weight.size() +
                                               layer.bias.size());
    out.push_back(std::move(layer));
  }
  try {
    return Mlp(std::move(out));
  } catch (const DimensionError& e) {
    throw IntegrityError(where.string() + ": " + e.what());
  }
}

std::string stage_name(std::size_t k) { return "stage_" + std::to_string(k); }

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) io_fail(tmp, "cannot open");
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t w = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (w < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      io_fail(tmp, "cannot write");
    }
    done += static_cast<std::size_t>(w);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    io_fail(tmp, "cannot fsync");
  }
  if (::close(fd) != 0) io_fail(tmp, "cannot close");
  if (::rename(tmp.c_str(), path.c_str()) != 0) io_fail(path, "cannot rename onto");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) io_fail(path, "cannot read");
  return std::move(ss).str();
}

std::string encode_latents(const LatentDataset& latents) {
  const Matrix& v = latents.vectors;
  std::string out;
  out.reserve(kLatentHeaderBytes + static_cast<std::size_t>(v.size()) * 4);
  out.append(kLatentMagic, sizeof(kLatentMagic));
  put_le<std::uint32_t>(out, kLatentVersion);
  put_le<std::uint32_t>(out, latents.stage_index);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(v.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(v.cols()));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(latents.encode_mode));
  put_le<std::uint64_t>(out, latents.source_seed);
  for (Index i = 0; i < v.size(); ++i) {
    const double d = v.data()[i];
    const float f = static_cast<float>(d);
    if (!std::isfinite(d) || !std::isfinite(f)) {
      throw FormatError(FormatErrorKind::kOverflow,
                        "write_latents: value " + format_double(d) + " at row " +
                            std::to_string(i / std::max<Index>(v.cols(), 1)) +
                            " is not representable as a 32-bit float");
    }
    put_le<float>(out, f);
  }
  return out;
}

void write_latents(const fs::path& path, const LatentDataset& latents) {
  write_file_atomic(path, encode_latents(latents));
}

LatentDataset decode_latents(std::string_view bytes) {
  const std::size_t magic_len = sizeof(kLatentMagic);
  const std::size_t prefix = std::min(bytes.size(), magic_len);
  if (std::memcmp(bytes.data(), kLatentMagic, prefix) != 0) {
    throw FormatError(FormatErrorKind::kBadMagic, "latent dump: bad magic");
  }
  if (bytes.size() < kLatentHeaderBytes) {
    throw FormatError(FormatErrorKind::kTruncated,
                      "latent dump: truncated header (" +
                          std::to_string(bytes.size()) + " bytes)");
  }
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kLatentVersion) {
    throw FormatError(FormatErrorKind::kBadVersion,
                      "latent dump: unsupported version " +
                          std::to_string(version));
  }
  LatentDataset out;
  out.stage_index = get_le<std::uint32_t>(bytes, 8);
  const auto rows = get_le<std::uint64_t>(bytes, 12);
  const auto cols = get_le<std::uint64_t>(bytes, 20);
  const auto mode = get_le<std::uint8_t>(bytes, 28);
  out.source_seed = get_le<std::uint64_t>(bytes, 29);
  if (mode > 1) {
    throw FormatError(FormatErrorKind::kBadField,
                      "latent dump: unknown encode mode " + std::to_string(mode));
  }
  out.encode_mode = static_cast<EncodeMode>(mode);

  const std::uint64_t payload = bytes.size() - kLatentHeaderBytes;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / 4;
  if (cols != 0 && rows > limit / cols) {
    throw FormatError(FormatErrorKind::kLengthMismatch,
                      "latent dump: declared size overflows");
  }
  const std::uint64_t expected = rows * cols * 4;
  if (payload < expected) {
    throw FormatError(FormatErrorKind::kTruncated,
                      "latent dump: payload has " + std::to_string(payload) +
                          " bytes, header declares " + std::to_string(expected));
  }
  if (payload > expected) {
    throw FormatError(FormatErrorKind::kLengthMismatch,
                      "latent dump: " + std::to_string(payload - expected) +
                          " trailing bytes after payload");
  }
  out.vectors.resize(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::uint64_t i = 0; i < rows * cols; ++i) {
    out.vectors.data()[i] = get_le<float>(bytes, kLatentHeaderBytes + 4 * i);
  }
  return out;
}

LatentDataset read_latents(const fs::path& path) {
  const std::string bytes = read_file(path);
  try {
    return decode_latents(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

void save_checkpoint(const fs::path& manifest_path, const GaussianVae& vae,
                     const json& metadata) {
  vae.validate();
  std::string blob(kWeightsMagic, sizeof(kWeightsMagic));
  json manifest;
  manifest["format"] = "msvae-checkpoint";
  manifest["version"] = kCheckpointVersion;
  manifest["d_x"] = vae.d_x;
  manifest["d_z"] = vae.d_z;
  manifest["trained"] = vae.trained;
  manifest["gamma"] = vae.gamma();
  manifest["encoder"] = layers_entry(vae.encoder, blob);
  manifest["decoder"] = layers_entry(vae.decoder, blob);
  manifest["log_gamma"] = tensor_entry(vae.log_gamma, blob.size());
  append_tensor(blob, vae.log_gamma);

  fs::path blob_path = manifest_path;
  blob_path.replace_extension(".bin");
  manifest["weights_file"] = blob_path.filename().string();
  manifest["weights_bytes"] = blob.size();
  manifest["metadata"] = metadata;

  write_file_atomic(blob_path, blob);
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
}

GaussianVae load_checkpoint(const fs::path& manifest_path, json* metadata) {
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw FormatError(FormatErrorKind::kParse,
                      manifest_path.string() + ": " + e.what());
  }
  if (required<std::string>(manifest, "format", manifest_path) !=
      "msvae-checkpoint") {
    throw FormatError(FormatErrorKind::kBadMagic,
                      manifest_path.string() + ": not a checkpoint manifest");
  }
  if (required<int>(manifest, "version", manifest_path) != kCheckpointVersion) {
    throw FormatError(FormatErrorKind::kBadVersion,
                      manifest_path.string() + ": unsupported version");
  }
  const fs::path blob_path =
      manifest_path.parent_path() /
      required<std::string>(manifest, "weights_file", manifest_path);
  const std::string blob = read_file(blob_path);
  if (blob.size() < sizeof(kWeightsMagic) ||
      std::memcmp(blob.data(), kWeightsMagic, sizeof(kWeightsMagic)) != 0) {
    throw FormatError(FormatErrorKind::kBadMagic,
                      blob_path.string() + ": bad weights magic");
  }
  if (required<std::uint64_t>(manifest, "weights_bytes", manifest_path) !=
      blob.size()) {
    throw IntegrityError(blob_path.string() +
                         ": blob length does not match manifest");
  }

  GaussianVae vae;
  std::uint64_t consumed = sizeof(kWeightsMagic);
  vae.encoder = read_layers(required<json>(manifest, "encoder", manifest_path),
                            blob, manifest_path, consumed);
  vae.decoder = read_layers(required<json>(manifest, "decoder", manifest_path),
                            blob, manifest_path, consumed);
  vae.log_gamma = read_tensor(required<json>(manifest, "log_gamma", manifest_path),
                              blob, manifest_path);
  consumed += 8 * static_cast<std::uint64_t>(vae.log_gamma.size());
  if (consumed != blob.size()) {
    throw IntegrityError(blob_path.string() + ": manifest covers " +
                         std::to_string(consumed) + " of " +
                         std::to_string(blob.size()) + " bytes");
  }
  vae.d_x = required<Index>(manifest, "d_x", manifest_path);
  vae.d_z = required<Index>(manifest, "d_z", manifest_path);
  vae.trained = required<bool>(manifest, "trained", manifest_path);
  try {
    vae.validate();
  } catch (const DimensionError& e) {
    throw IntegrityError(manifest_path.string() + ": " + e.what());
  }
  if (metadata != nullptr) {
    *metadata = manifest.value("metadata", json::object());
  }
  return vae;
}

void save_stack(const fs::path& dir, const StageStack& stack,
                const json& metadata) {
  stack.validate();
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "msvae-stack";
  manifest["version"] = kStackVersion;
  manifest["dims"] = stack.dims();
  json stages = json::array();
  for (std::size_t k = 0; k < stack.size(); ++k) {
    const std::string file = stage_name(k) + ".json";
    save_checkpoint(dir / file, stack[k], json{{"stage", k}});
    stages.push_back(json{{"manifest", file}});
  }
  manifest["stages"] = stages;
  manifest["metadata"] = metadata;
  write_file_atomic(dir / "stack.json", manifest.dump(2) + "\n");
}

bool is_stack_dir(const fs::path& dir) {
  return fs::is_regular_file(dir / "stack.json");
}

StageStack load_stack(const fs::path& dir, json* metadata) {
  const fs::path path = dir / "stack.json";
  json manifest;
  try {
    manifest = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError(FormatErrorKind::kParse, path.string() + ": " + e.what());
  }
  if (required<std::string>(manifest, "format", path) != "msvae-stack") {
    throw FormatError(FormatErrorKind::kBadMagic,
                      path.string() + ": not a stack manifest");
  }
  if (required<int>(manifest, "version", path) != kStackVersion) {
    throw FormatError(FormatErrorKind::kBadVersion,
                      path.string() + ": unsupported version");
  }
  const auto dims = required<std::vector<Index>>(manifest, "dims", path);
  const json stages = required<json>(manifest, "stages", path);
  if (!stages.is_array()) {
    throw FormatError(FormatErrorKind::kBadField,
                      path.string() + ": stages must be an array");
  }
  std::vector<GaussianVae> loaded;
  for (const json& entry : stages) {
    loaded.push_back(
        load_checkpoint(dir / required<std::string>(entry, "manifest", path)));
  }
  StageStack stack(std::move(loaded));
  if (stack.dims() != dims) {
    throw IntegrityError(path.string() +
                         ": recorded dimension chain does not match stages");
  }
  if (metadata != nullptr) *metadata = manifest.value("metadata", json::object());
  return stack;
}

std::string csv_format(const Matrix& m, bool header,
                       std::span<const std::string> column_names) {
  if (!column_names.empty() &&
      column_names.size() != static_cast<std::size_t>(m.cols())) {
    throw DimensionError("csv: " + std::to_string(column_names.size()) +
                         " column names for " + std::to_string(m.cols()) +
                         " columns");
  }
  std::string out;
  if (header) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out.push_back(',');
      out += column_names.empty() ? "x" + std::to_string(j)
                                  : column_names[static_cast<std::size_t>(j)];
    }
    out.push_back('\n');
  }
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out.push_back(',');
      out += format_double(m(i, j));
    }
    out.push_back('\n');
  }
  return out;
}

void csv_export(const fs::path& path, const Matrix& m, bool header,
                std::span<const std::string> column_names) {
  write_file_atomic(path, csv_format(m, header, column_names));
}

Matrix csv_parse(std::string_view text, std::optional<bool> has_header) {
  std::vector<std::vector<double>> rows;
  std::size_t header_width = 0;
  std::size_t line_no = 0;
  bool first = true;
  while (!text.empty()) {
    const std::size_t eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::vector<std::string_view> fields;
    for (std::size_t start = 0;;) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (first) {
      first = false;
      const bool header = has_header.value_or(!parse_double(fields[0]).has_value());
      if (header) {
        header_width = fields.size();
        continue;
      }
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::string_view f : fields) {
      auto v = parse_double(f);
      if (!v) {
        throw FormatError(FormatErrorKind::kParse,
                          "csv line " + std::to_string(line_no) +
                              ": cannot parse '" + std::string(f) + "'");
      }
      row.push_back(*v);
    }
    const std::size_t width =
        rows.empty() ? (header_width ? header_width : row.size())
                     : rows.front().size();
    if (row.size() != width) {
      throw FormatError(FormatErrorKind::kParse,
                        "csv line " + std::to_string(line_no) + ": expected " +
                            std::to_string(width) + " fields, got " +
                            std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  const std::size_t width = rows.empty() ? header_width : rows.front().size();
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
  }
  return m;
}

Matrix csv_import(const fs::path& path, std::optional<bool> has_header) {
  const std::string text = read_file(path);
  try {
    return csv_parse(text, has_header);
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace msvae
