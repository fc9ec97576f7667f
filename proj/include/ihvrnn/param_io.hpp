#pragma once

// Parameter container on disk:
//
//   IHVRNN-PARAMS 1\n
//   manifest-bytes <N>\n
//   <N bytes of JSON manifest>
//   <raw payload: little-endian IEEE-754 binary64, entries back to back>
//
// The manifest lists every entry as {name, shape [rows, cols], dtype "f64le",
// offset, bytes} plus payload_bytes, an FNV-1a 64 checksum of the payload and a
// free-form "meta" object.

#include <filesystem>
#include <string>

#include "json.hpp"

#include "ihvrnn/params.hpp"

namespace ihvrnn {

struct ParamFile {
  ParamTree params;
  nlohmann::json meta;
};

void write_param_file(const std::filesystem::path& path, const ParamTree& params,
                      const nlohmann::json& meta);
// Throws CheckpointError on a bad header, manifest or checksum, or a short payload.
ParamFile read_param_file(const std::filesystem::path& path);

}  // namespace ihvrnn
