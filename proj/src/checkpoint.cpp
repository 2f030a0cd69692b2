#include "svs/checkpoint.hpp"

#include "svs/binio.hpp"

#include <filesystem>
#include <fstream>

namespace svs {

using nlohmann::json;
namespace fs = std::filesystem;

json model_config_to_json(const ModelConfig& cfg) {
  return json{{"d_model", cfg.d_model},
              {"n_heads", cfg.n_heads},
              {"cls_layers", cfg.cls_layers},
              {"enc_layers", cfg.enc_layers},
              {"dec_layers", cfg.dec_layers},
              {"highway_blocks", cfg.highway_blocks},
              {"subsample", cfg.subsample},
              {"ff_mult", cfg.ff_mult},
              {"dropout", cfg.dropout},
              {"vocab", cfg.vocab},
              {"mel_bins", cfg.mel_bins}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.d_model = j.at("d_model").get<Index>();
  cfg.n_heads = j.at("n_heads").get<Index>();
  cfg.cls_layers = j.at("cls_layers").get<Index>();
  cfg.enc_layers = j.at("enc_layers").get<Index>();
  cfg.dec_layers = j.at("dec_layers").get<Index>();
  cfg.highway_blocks = j.at("highway_blocks").get<Index>();
  cfg.subsample = j.at("subsample").get<Index>();
  cfg.ff_mult = j.at("ff_mult").get<Index>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.vocab = j.at("vocab").get<int>();
  cfg.mel_bins = j.at("mel_bins").get<Index>();
  return cfg;
}

namespace {

void write_tensor(std::ostream& os, const std::string& name, const Matf& m) {
  write_string(os, name);
  write_u32(os, 2);
  write_u32(os, static_cast<uint32_t>(m.rows()));
  write_u32(os, static_cast<uint32_t>(m.cols()));
  write_f32_array(os, m.data(), static_cast<size_t>(m.size()));
}

void read_tensor_into(std::istream& is, Matf& m, const std::string& name,
                      const std::string& path) {
  const uint32_t rank = read_u32(is);
  require(rank == 2, Err::BadCheckpoint, path + ": tensor " + name + " has rank != 2");
  const uint32_t rows = read_u32(is);
  const uint32_t cols = read_u32(is);
  require(static_cast<Index>(rows) == m.rows() && static_cast<Index>(cols) == m.cols(),
          Err::BadCheckpoint,
          path + ": tensor " + name + " is " + std::to_string(rows) + "x" +
              std::to_string(cols) + ", model expects " + std::to_string(m.rows()) + "x" +
              std::to_string(m.cols()));
  read_f32_array(is, m.data(), static_cast<size_t>(m.size()));
}

}  // namespace

void save_checkpoint(const std::string& path, const SvsModel<float>& model,
                     const TrainerState& state, const PhonemeInventory* inventory) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(f.good(), Err::UnreadableFile, "cannot write " + tmp);
    write_magic(f, "SVSC");
    write_u32(f, 1);
    json header = {{"config", model_config_to_json(model.config)},
                   {"state",
                    {{"step", state.step},
                     {"adam_t", state.adam_t},
                     {"cycles_done", state.cycles_done},
                     {"rng", state.rng_state}}}};
    if (inventory) {
      json inv_json = json::array();
      for (int i = 1; i < inventory->size(); ++i)
        inv_json.push_back({{"symbol", inventory->symbols[static_cast<size_t>(i)]},
                            {"vowel", inventory->is_vowel(i)}});
      header["inventory"] = inv_json;
    }
    write_string(f, header.dump());

    const auto& params = model.params.all();
    write_u32(f, static_cast<uint32_t>(3 * params.size()));
    for (const Param<float>* p : params) {
      write_tensor(f, p->name, p->value);
      write_tensor(f, p->name + "#m", p->m);
      write_tensor(f, p->name + "#v", p->v);
    }
    require(f.good(), Err::UnreadableFile, "write failed for " + tmp);
  }
  fs::rename(tmp, path);
}

std::unique_ptr<SvsModel<float>> load_checkpoint(const std::string& path, TrainerState* state,
                                                 PhonemeInventory* inventory) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), Err::MissingFile, "cannot open checkpoint " + path);
  check_magic(f, "SVSC", path);
  const uint32_t version = read_u32(f);
  require(version == 1, Err::BadCheckpoint, path + ": unsupported checkpoint version");
  json header;
  try {
    header = json::parse(read_string(f));
  } catch (const json::exception& e) {
    fail(Err::BadCheckpoint, path + ": bad header: " + e.what());
  }

  auto model = std::make_unique<SvsModel<float>>(model_config_from_json(header.at("config")), 0);
  if (state) {
    const json& s = header.at("state");
    state->step = s.at("step").get<int64_t>();
    state->adam_t = s.at("adam_t").get<int64_t>();
    state->cycles_done = s.at("cycles_done").get<int>();
    state->rng_state = s.at("rng").get<std::string>();
  }
  if (inventory) {
    require(header.contains("inventory"), Err::BadCheckpoint,
            path + ": checkpoint carries no phoneme inventory");
    inventory->symbols = {"<blank>"};
    inventory->classes = {PhonemeClass::Blank};
    for (const auto& e : header.at("inventory")) {
      inventory->symbols.push_back(e.at("symbol").get<std::string>());
      inventory->classes.push_back(e.at("vowel").get<bool>() ? PhonemeClass::Vowel
                                                             : PhonemeClass::Consonant);
    }
  }

  const uint32_t count = read_u32(f);
  uint32_t filled = 0;
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(f);
    const size_t hash_pos = name.find('#');
    const std::string base = hash_pos == std::string::npos ? name : name.substr(0, hash_pos);
    Param<float>* p = model->params.find(base);
    require(p != nullptr, Err::BadCheckpoint, path + ": unknown tensor " + name);
    Matf* dst = &p->value;
    if (hash_pos != std::string::npos) {
      const std::string suffix = name.substr(hash_pos);
      require(suffix == "#m" || suffix == "#v", Err::BadCheckpoint,
              path + ": unknown tensor suffix " + name);
      dst = suffix == "#m" ? &p->m : &p->v;
    }
    read_tensor_into(f, *dst, name, path);
    ++filled;
  }
  require(f.good(), Err::BadCheckpoint, path + ": truncated tensor data");
  require(filled == 3 * model->params.all().size(), Err::BadCheckpoint,
          path + ": tensor count mismatch");
  return model;
}

}  // namespace svs
