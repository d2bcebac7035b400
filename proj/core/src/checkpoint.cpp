// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#include "relab/checkpoint.hpp"

#include "relab/io.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

namespace relab {

namespace {

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
  return json{{"n_layers", c.n_layers}, {"d_model", c.d_model},
              {"n_heads", c.n_heads},   {"d_mlp", c.d_mlp},
              {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
              {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_mlp = j.at("d_mlp").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void append_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// Row-major float write; Eigen stores column-major.
void append_tensor(std::string& buf, int rows, int cols, const float* data) {
  buf.reserve(buf.size() + static_cast<size_t>(rows) * static_cast<size_t>(cols) * 4);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      float v = data[static_cast<size_t>(j) * static_cast<size_t>(rows) + static_cast<size_t>(i)];
      char bytes[4];
      std::memcpy(bytes, &v, 4);
      buf.append(bytes, 4);
    }
  }
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  json manifest = json::array();
  model.w.for_each_tensor([&](const std::string& name, int r, int c, const float*) {
    manifest.push_back(json{{"name", name}, {"shape", {r, c}}});
  });
  json header{{"config", config_to_json(model.config)}, {"tensors", manifest}};
  std::string header_str = header.dump();

  std::string buf;
  buf.append(kCheckpointMagic, 4);
  append_u32(buf, kCheckpointVersion);
  append_u64(buf, header_str.size());
  buf += header_str;
  model.w.for_each_tensor([&](const std::string&, int r, int c, const float* data) {
    append_tensor(buf, r, c, data);
  });
  atomic_write(path, buf);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::string buf = read_file(path);
  size_t off = 0;
  auto need = [&](size_t n, const char* what) {
    if (off + n > buf.size()) {
      throw ValidationError("truncated checkpoint (" + std::string(what) + "): " +
                            path.string());
    }
  };

  need(4, "magic");
  if (std::memcmp(buf.data(), kCheckpointMagic, 4) != 0) {
    throw ValidationError("bad checkpoint magic: " + path.string());
  }
  off = 4;

  need(4, "version");
  std::uint32_t version = 0;
  for (int i = 3; i >= 0; --i) {
    version = (version << 8) | static_cast<unsigned char>(buf[off + static_cast<size_t>(i)]);
  }
  off += 4;
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }

  need(8, "header length");
  std::uint64_t header_len = 0;
  for (int i = 7; i >= 0; --i) {
    header_len = (header_len << 8) | static_cast<unsigned char>(buf[off + static_cast<size_t>(i)]);
  }
  off += 8;

  need(header_len, "header");
  json header;
  try {
    header = json::parse(buf.substr(off, header_len));
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("bad checkpoint header: ") + e.what());
  }
  off += header_len;

  Model model = build_model(config_from_json(header.at("config")));

  const auto& manifest = header.at("tensors");
  size_t idx = 0;
  model.w.for_each_tensor([&](const std::string& name, int r, int c, float* data) {
    if (idx >= manifest.size()) {
      throw ValidationError("checkpoint manifest ended before tensor " + name);
    }
    const auto& entry = manifest[idx++];
    if (entry.at("name").get<std::string>() != name) {
      throw ValidationError("tensor order mismatch: expected " + name + ", manifest has " +
                            entry.at("name").get<std::string>());
    }
    int mr = entry.at("shape")[0].get<int>();
    int mc = entry.at("shape")[1].get<int>();
    if (mr != r || mc != c) {
      throw ValidationError("tensor " + name + " shape mismatch: file has " +
                            std::to_string(mr) + "x" + std::to_string(mc) + ", config implies " +
                            std::to_string(r) + "x" + std::to_string(c));
    }
    size_t bytes = static_cast<size_t>(r) * static_cast<size_t>(c) * 4;
    need(bytes, name.c_str());
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) {
        float v;
        std::memcpy(&v, buf.data() + off, 4);
        off += 4;
        data[static_cast<size_t>(j) * static_cast<size_t>(r) + static_cast<size_t>(i)] = v;
      }
    }
  });
  if (idx != manifest.size()) {
    throw ValidationError("checkpoint manifest has extra tensors");
  }
  return model;
}

}  // namespace relab
