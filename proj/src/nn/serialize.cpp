#include "hac/nn/serialize.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace hac::nn {

namespace {

constexpr std::array<char, 8> kMagic = {'H', 'A', 'C', 'P', 'A', 'R', 'A', 'M'};

static_assert(std::endian::native == std::endian::little, "parameter files assume a little-endian host");

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_string(std::ofstream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw ParameterFileError("cannot open parameter file " + path.string());
  }

  template <typename T>
  T get() {
    T value{};
    read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
  }

  std::string get_string() {
    const auto len = get<std::uint32_t>();
    if (len > (1u << 24)) corrupt("implausible string length");
    std::string s(len, '\0');
    read(s.data(), len);
    return s;
  }

  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) corrupt("truncated");
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  [[noreturn]] void corrupt(const std::string& why) const {
    throw ParameterFileError("corrupt parameter file " + path_.string() + ": " + why);
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

void write_parameter_file(const std::filesystem::path& path, const std::string& fingerprint,
                          const ParameterList& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParameterFileError("cannot write parameter file " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kParameterFileVersion);
  put_string(out, fingerprint);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_string(out, p.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) put<std::uint64_t>(out, d);
    const auto values = p.tensor.values();
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  }
  if (!out) throw ParameterFileError("failed writing parameter file " + path.string());
}

void read_parameter_file(const std::filesystem::path& path, const std::string& fingerprint,
                         const ParameterList& params) {
  Reader in(path);
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (magic != kMagic) in.corrupt("bad magic");
  const auto version = in.get<std::uint32_t>();
  if (version != kParameterFileVersion) in.corrupt("unsupported version " + std::to_string(version));
  if (in.get_string() != fingerprint) {
    throw ParameterFileError("spec mismatch loading " + path.string());
  }
  const auto count = in.get<std::uint32_t>();
  if (count != params.size()) throw ParameterFileError("spec mismatch: parameter block count differs");

  // Stage everything before touching the destination so a failure leaves it intact.
  std::vector<std::vector<double>> staged;
  for (const auto& p : params) {
    if (in.get_string() != p.name) throw ParameterFileError("spec mismatch: block name differs at " + p.name);
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    if (shape != p.tensor.shape()) throw ParameterFileError("spec mismatch: shape differs for " + p.name);
    std::vector<double> values(shape_numel(shape));
    in.read(reinterpret_cast<char*>(values.data()), values.size() * sizeof(double));
    staged.push_back(std::move(values));
  }
  if (!in.at_end()) in.corrupt("trailing bytes");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto t = params[i].tensor;
    std::copy(staged[i].begin(), staged[i].end(), t.mutable_values().begin());
  }
}

void save_parameters(const Module& module, const std::filesystem::path& path) {
  write_parameter_file(path, module.spec().fingerprint(), module.parameters());
}

void load_parameters(const Module& module, const std::filesystem::path& path) {
  read_parameter_file(path, module.spec().fingerprint(), module.parameters());
}

}  // namespace hac::nn
