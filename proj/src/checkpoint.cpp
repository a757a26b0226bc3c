#include <bit>
#include <cstring>
#include <map>

#include "dclone/error.hpp"
#include "dclone/io.hpp"
#include "dclone/trainer.hpp"

namespace dclone {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and feature files are written as little-endian raw floats");

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'D', 'C', 'K', 'P', 'T', '0', '0', '1'};

std::filesystem::path resolve_dir(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return path;
  return path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Model model = checkpoint.model;
  const auto params = model.state();

  ordered_json tensors = ordered_json::array();
  std::size_t offset = 0;
  for (const auto* p : params) {
    tensors.push_back({{"name", p->name}, {"shape", p->shape}, {"offset", offset}, {"count", p->size()}});
    offset += p->size();
  }
  const std::string header = ordered_json{{"tensors", tensors}}.dump();
  std::vector<std::uint8_t> bytes(sizeof kMagic + 8 + header.size() + offset * sizeof(float));
  std::uint8_t* out = bytes.data();
  std::memcpy(out, kMagic, sizeof kMagic);
  out += sizeof kMagic;
  const auto hlen = static_cast<std::uint64_t>(header.size());
  std::memcpy(out, &hlen, 8);
  out += 8;
  std::memcpy(out, header.data(), header.size());
  out += header.size();
  for (const auto* p : params) {
    std::memcpy(out, p->value.data(), p->size() * sizeof(float));
    out += p->size() * sizeof(float);
  }
  write_file_atomic(dir / "checkpoint.bin", bytes);

  ordered_json meta;
  meta["format"] = "dclone-checkpoint-1";
  meta["catalog_name"] = checkpoint.catalog_name;
  meta["num_classes"] = checkpoint.num_classes();
  meta["classes"] = checkpoint.classes;
  meta["encoder"] = {{"arch", checkpoint.model.encoder_config().arch},
                     {"widths", checkpoint.model.encoder_config().widths}};
  meta["feature_dim"] = checkpoint.model.feature_dim();
  meta["config"] = to_json(checkpoint.config);
  meta["history"] = {{"total_steps", checkpoint.history.total_steps},
                     {"epoch_loss", checkpoint.history.epoch_loss},
                     {"epoch_lr", checkpoint.history.epoch_lr}};
  write_file_atomic(dir / "checkpoint.json", meta.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto dir = resolve_dir(path);
  Checkpoint ckpt;
  json meta;
  try {
    meta = json::parse(read_file_text(dir / "checkpoint.json"));
    ckpt.catalog_name = meta.value("catalog_name", "");
    ckpt.classes = meta.at("classes").get<std::vector<std::string>>();
    ckpt.config = train_config_from_json(meta.at("config"));
    const auto& h = meta.at("history");
    ckpt.history.total_steps = h.at("total_steps").get<std::int64_t>();
    ckpt.history.epoch_loss = h.at("epoch_loss").get<std::vector<double>>();
    ckpt.history.epoch_lr = h.at("epoch_lr").get<std::vector<double>>();
  } catch (const json::exception& ex) {
    fail(ErrorCode::kParse, "checkpoint metadata: " + std::string(ex.what()));
  }
  EncoderConfig enc;
  enc.arch = meta.at("encoder").at("arch").get<std::string>();
  enc.widths = meta.at("encoder").at("widths").get<std::vector<int>>();
  ckpt.model = Model(enc, meta.at("num_classes").get<int>());
  if (static_cast<int>(ckpt.classes.size()) != ckpt.num_classes()) {
    fail(ErrorCode::kParse, "checkpoint metadata: class list does not match num_classes");
  }

  const auto bytes = read_file_bytes(dir / "checkpoint.bin");
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    fail(ErrorCode::kParse, "checkpoint.bin: bad magic");
  }
  std::uint64_t hlen = 0;
  std::memcpy(&hlen, bytes.data() + sizeof kMagic, 8);
  const std::size_t data_start = sizeof kMagic + 8 + hlen;
  if (data_start > bytes.size()) fail(ErrorCode::kParse, "checkpoint.bin: truncated header");
  json header;
  try {
    header = json::parse(bytes.begin() + sizeof kMagic + 8, bytes.begin() + static_cast<std::ptrdiff_t>(data_start));
  } catch (const json::exception& ex) {
    fail(ErrorCode::kParse, "checkpoint.bin header: " + std::string(ex.what()));
  }
  const std::size_t floats = (bytes.size() - data_start) / sizeof(float);
  std::map<std::string, json> by_name;
  for (const auto& t : header.at("tensors")) by_name[t.at("name").get<std::string>()] = t;
  for (auto* p : ckpt.model.state()) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) fail(ErrorCode::kParse, "checkpoint.bin: missing tensor " + p->name);
    const auto shape = it->second.at("shape").get<std::vector<int>>();
    const auto off = it->second.at("offset").get<std::size_t>();
    const auto count = it->second.at("count").get<std::size_t>();
    if (shape != p->shape || count != p->size() || off + count > floats) {
      fail(ErrorCode::kParse, "checkpoint.bin: tensor " + p->name + " has the wrong shape");
    }
    std::memcpy(p->value.data(), bytes.data() + data_start + off * sizeof(float), count * sizeof(float));
  }
  return ckpt;
}

}  // namespace dclone
