#include "ihvrnn/param_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ihvrnn/errors.hpp"
#include "ihvrnn/rng.hpp"

namespace ihvrnn {

namespace {

constexpr const char* kMagic = "IHVRNN-PARAMS 1";

void append_le(std::string& out, double v) {
  uint64_t bits = std::bit_cast<uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

double read_le(const char* p) {
  uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return std::bit_cast<double>(bits);
}

std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

void write_param_file(const std::filesystem::path& path, const ParamTree& params,
                      const nlohmann::json& meta) {
  std::string payload;
  payload.reserve(params.total_size() * 8);
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& name : params.names()) {
    const Matrix& m = params.at(name);
    entries.push_back({{"name", name},
                       {"shape", {m.rows(), m.cols()}},
                       {"dtype", "f64le"},
                       {"offset", payload.size()},
                       {"bytes", m.size() * 8}});
    for (double v : m.values()) append_le(payload, v);
  }
  nlohmann::json manifest = {{"entries", entries},
                             {"payload_bytes", payload.size()},
                             {"payload_fnv1a64", hex64(fnv1a64(payload))},
                             {"meta", meta}};
  const std::string text = manifest.dump();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out << kMagic << '\n' << "manifest-bytes " << text.size() << '\n' << text;
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw CheckpointError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ParamFile read_param_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::string magic, tag;
  std::getline(in, magic);
  if (magic != kMagic) throw CheckpointError(path.string() + ": not a parameter file");
  std::size_t manifest_bytes = 0;
  if (!(in >> tag >> manifest_bytes) || tag != "manifest-bytes") {
    throw CheckpointError(path.string() + ": corrupt manifest header");
  }
  in.get();
  std::string text(manifest_bytes, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(manifest_bytes))) {
    throw CheckpointError(path.string() + ": truncated manifest");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": corrupt manifest: " + e.what());
  }
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  ParamFile result;
  try {
    const std::size_t expected = manifest.at("payload_bytes").get<std::size_t>();
    if (payload.size() != expected) {
      throw CheckpointError(path.string() + ": payload is " + std::to_string(payload.size()) +
                            " bytes, manifest says " + std::to_string(expected));
    }
    if (manifest.at("payload_fnv1a64").get<std::string>() != hex64(fnv1a64(payload))) {
      throw CheckpointError(path.string() + ": payload checksum mismatch");
    }
    for (const auto& e : manifest.at("entries")) {
      if (e.at("dtype").get<std::string>() != "f64le") throw CheckpointError("unsupported dtype");
      const int rows = e.at("shape").at(0).get<int>();
      const int cols = e.at("shape").at(1).get<int>();
      const std::size_t offset = e.at("offset").get<std::size_t>();
      const std::size_t bytes = e.at("bytes").get<std::size_t>();
      if (bytes != static_cast<std::size_t>(rows) * cols * 8 || offset + bytes > payload.size()) {
        throw CheckpointError(path.string() + ": entry " + e.at("name").get<std::string>() + " out of range");
      }
      Matrix m(rows, cols);
      for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = read_le(payload.data() + offset + 8 * k);
      result.params.add(e.at("name").get<std::string>(), std::move(m));
    }
    result.meta = manifest.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": corrupt manifest: " + e.what());
  }
  return result;
}

}  // namespace ihvrnn
