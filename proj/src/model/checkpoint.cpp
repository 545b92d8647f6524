#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "headprune/model.hpp"

namespace headprune::model {
namespace {

using nlohmann::json;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

json config_json(const ModelConfig& c) {
  return json{{"num_layers", c.num_layers}, {"heads_per_layer", c.heads_per_layer},
              {"model_dim", c.model_dim},   {"ff_dim", c.ff_dim},
              {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
              {"dropout_rate", c.dropout_rate}, {"num_classes", c.num_classes}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.heads_per_layer = j.at("heads_per_layer").get<std::size_t>();
  c.model_dim = j.at("model_dim").get<std::size_t>();
  c.ff_dim = j.at("ff_dim").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  return c;
}

[[noreturn]] void reject(const std::filesystem::path& path, const std::string& why) {
  throw std::runtime_error("checkpoint " + path.string() + ": " + why);
}

}  // namespace

void save_checkpoint(const EncoderModel& model, const std::filesystem::path& path) {
  json header;
  header["config"] = config_json(model.config());
  json mask = json::array();
  const HeadMask& hm = model.head_mask();
  for (std::size_t l = 0; l < hm.layers(); ++l) {
    json row = json::array();
    for (std::size_t h = 0; h < hm.heads(); ++h) row.push_back(hm.active({l, h}) ? 1 : 0);
    mask.push_back(row);
  }
  header["head_mask"] = mask;
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const ad::Parameter* p : model.parameters()) {
    tensors.push_back(json{{"name", p->name}, {"shape", p->value.shape}, {"offset", offset}});
    offset += p->value.size() * sizeof(double);
  }
  header["tensors"] = tensors;
  header["payload_bytes"] = offset;
  const std::string text = header.dump();

  std::string blob(kCheckpointMagic, 8);
  put_u32(blob, kCheckpointVersion);
  put_u64(blob, text.size());
  blob += text;
  for (const ad::Parameter* p : model.parameters())
    for (double x : p->value.data) put_u64(blob, std::bit_cast<std::uint64_t>(x));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("short write to checkpoint " + path.string());
}

EncoderModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) reject(path, "cannot open");
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  constexpr std::size_t kPrefix = 8 + 4 + 8;
  if (blob.size() < kPrefix) reject(path, "truncated prefix");
  if (std::memcmp(blob.data(), kCheckpointMagic, 8) != 0) reject(path, "bad magic");
  const auto version = static_cast<std::uint32_t>(get_u64(bytes + 8, 4));
  if (version != kCheckpointVersion)
    reject(path, "version " + std::to_string(version) + " unsupported (expected " +
                     std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t header_len = get_u64(bytes + 12, 8);
  if (header_len > blob.size() - kPrefix) reject(path, "header length exceeds file size");

  json header;
  try {
    header = json::parse(blob.substr(kPrefix, header_len));
  } catch (const json::exception& e) {
    reject(path, std::string("malformed header: ") + e.what());
  }
  try {
    const ModelConfig config = config_from_json(header.at("config"));
    EncoderModel model = EncoderModel::init(config, 0);
    const std::size_t payload_start = kPrefix + header_len;
    const auto payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
    if (blob.size() - payload_start != payload_bytes) reject(path, "payload size mismatch (truncated file?)");

    const json& tensors = header.at("tensors");
    std::vector<ad::Parameter*> params = model.parameters();
    if (tensors.size() != params.size()) reject(path, "tensor manifest does not match config");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const json& t = tensors[i];
      ad::Parameter& p = *params[i];
      if (t.at("name").get<std::string>() != p.name || t.at("shape").get<ad::Shape>() != p.value.shape)
        reject(path, "tensor '" + t.at("name").get<std::string>() + "' does not match config");
      const auto offset = t.at("offset").get<std::uint64_t>();
      if (offset + p.value.size() * sizeof(double) > payload_bytes) reject(path, "tensor outside payload");
      const unsigned char* src = bytes + payload_start + offset;
      for (std::size_t j = 0; j < p.value.size(); ++j)
        p.value.data[j] = std::bit_cast<double>(get_u64(src + 8 * j, 8));
      p.zero_grad();
    }
    const json& mask = header.at("head_mask");
    if (mask.size() != config.num_layers) reject(path, "head mask shape mismatch");
    for (std::size_t l = 0; l < config.num_layers; ++l) {
      if (mask[l].size() != config.heads_per_layer) reject(path, "head mask shape mismatch");
      for (std::size_t h = 0; h < config.heads_per_layer; ++h)
        model.head_mask().set({l, h}, mask[l][h].get<int>() != 0);
    }
    return model;
  } catch (const json::exception& e) {
    reject(path, std::string("malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    reject(path, e.what());
  }
}

}  // namespace headprune::model
