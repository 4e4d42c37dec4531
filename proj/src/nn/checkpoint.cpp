#include "colf/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace colf::nn {

namespace {

constexpr char kMagic[8] = {'C', 'O', 'L', 'F', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

nlohmann::json spec_to_json(const MlpSpec& s) {
  return {{"input_dim", s.input_dim}, {"hidden_dims", s.hidden_dims}, {"output_dim", s.output_dim}};
}

MlpSpec spec_from_json(const nlohmann::json& j) {
  MlpSpec s;
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  s.output_dim = j.at("output_dim").get<int>();
  s.validate();
  return s;
}

}  // namespace

const ParameterSet<float>& Checkpoint::at(const std::string& name) const {
  for (const auto& n : networks)
    if (n.name == name) return n.params;
  throw ContractViolation("checkpoint has no network named '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& n : networks)
    if (n.name == name) return true;
  return false;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format_version"] = ckpt.format_version;
  header["seed"] = ckpt.seed;
  header["log_std_bounds"] = {{"min", ckpt.log_std_bounds.min}, {"max", ckpt.log_std_bounds.max}};
  header["metadata"] = ckpt.metadata;
  header["networks"] = nlohmann::json::array();
  for (const auto& n : ckpt.networks) {
    if (!n.params.all_finite()) throw NonFiniteError("refusing to checkpoint non-finite network '" + n.name + "'");
    header["networks"].push_back(
        {{"name", n.name}, {"spec", spec_to_json(n.params.spec())}, {"count", n.params.size()}});
  }
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& n : ckpt.networks) {
    const Vec<float>& flat = n.params.flat();
    for (Eigen::Index i = 0; i < flat.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(flat[i]));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic)");
  const std::uint32_t header_len = get_u32(bytes, sizeof(kMagic));
  std::size_t pos = sizeof(kMagic) + 4;
  if (bytes.size() < pos + header_len) throw std::runtime_error("truncated checkpoint header");
  const auto header = nlohmann::json::parse(bytes.substr(pos, header_len));
  pos += header_len;

  Checkpoint ckpt;
  ckpt.format_version = header.at("format_version").get<int>();
  if (ckpt.format_version != kCheckpointFormatVersion)
    throw std::runtime_error("unsupported checkpoint format version " + std::to_string(ckpt.format_version));
  ckpt.seed = header.at("seed").get<std::uint64_t>();
  ckpt.log_std_bounds.min = header.at("log_std_bounds").at("min").get<double>();
  ckpt.log_std_bounds.max = header.at("log_std_bounds").at("max").get<double>();
  ckpt.metadata = header.value("metadata", nlohmann::json::object());
  for (const auto& entry : header.at("networks")) {
    NamedParameters n{entry.at("name").get<std::string>(), ParameterSet<float>(spec_from_json(entry.at("spec")))};
    const auto count = entry.at("count").get<Eigen::Index>();
    if (count != n.params.size()) throw std::runtime_error("checkpoint network '" + n.name + "' size mismatch");
    if (bytes.size() < pos + 4 * static_cast<std::size_t>(count)) throw std::runtime_error("truncated checkpoint body");
    Vec<float>& flat = n.params.flat();
    for (Eigen::Index i = 0; i < count; ++i, pos += 4) flat[i] = std::bit_cast<float>(get_u32(bytes, pos));
    ckpt.networks.push_back(std::move(n));
  }
  if (pos != bytes.size()) throw std::runtime_error("trailing bytes after checkpoint body");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write-then-rename so an interrupted save never clobbers the previous file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace colf::nn
