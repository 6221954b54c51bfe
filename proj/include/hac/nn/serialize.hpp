#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "hac/nn/module.hpp"
#include "hac/nn/tensor.hpp"

namespace hac::nn {

class ParameterFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary parameter container, little-endian:
//   magic "HACPARAM", u32 version, str fingerprint, u32 block count,
//   per block: str name, u32 rank, u64 dims[rank], f64 values[numel]
// where str = u32 length + bytes. Values are stored bit-exactly.
inline constexpr std::uint32_t kParameterFileVersion = 1;

void write_parameter_file(const std::filesystem::path& path, const std::string& fingerprint,
                          const ParameterList& params);
// Loads into existing tensors; fingerprint, names and shapes must match.
void read_parameter_file(const std::filesystem::path& path, const std::string& fingerprint,
                         const ParameterList& params);

void save_parameters(const Module& module, const std::filesystem::path& path);
void load_parameters(const Module& module, const std::filesystem::path& path);

}  // namespace hac::nn
