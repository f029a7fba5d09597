#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxgen/nn.hpp"
#include "voxgen/serialize.hpp"

namespace voxgen {

/// Writes every parameter (and, if given, the optimizer moments) as VGT1
/// tensors under `dir`, indexed by a manifest. Binary payloads keep training
/// state bit-exact across save/load.
template <class S>
inline void save_checkpoint(const std::string& dir,
                            const ParamStore<S>& params,
                            const Adam<S>* opt = nullptr,
                            std::int64_t step = 0,
                            const std::string& extra_json = "{}") {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json man;
  man["format"] = "voxgen-checkpoint-1";
  man["scalar"] = sizeof(S) == 4 ? "f32" : "f64";
  man["step"] = step;
  man["extra"] = nlohmann::json::parse(extra_json);

  nlohmann::json plist = nlohmann::json::array();
  std::size_t idx = 0;
  for (const auto& [name, t] : params) {
    char file[32];
    std::snprintf(file, sizeof(file), "p_%04zu.vgt", idx);
    write_vgt1(dir + "/" + file, t);
    plist.push_back({{"name", name}, {"file", file}});
    ++idx;
  }
  man["params"] = plist;

  if (opt) {
    nlohmann::json adam;
    adam["step_count"] = opt->step_count();
    nlohmann::json slots = nlohmann::json::array();
    auto& sl = const_cast<Adam<S>*>(opt)->slots();
    for (std::size_t i = 0; i < sl.size(); ++i) {
      char mf[32], vf[32];
      std::snprintf(mf, sizeof(mf), "a_%04zu_m.vgt", i);
      std::snprintf(vf, sizeof(vf), "a_%04zu_v.vgt", i);
      write_vgt1(dir + "/" + mf,
                 Tensor<S>::from({sl[i].m.size()}, sl[i].m));
      write_vgt1(dir + "/" + vf,
                 Tensor<S>::from({sl[i].v.size()}, sl[i].v));
      slots.push_back({{"m", mf}, {"v", vf}});
    }
    adam["slots"] = slots;
    man["adam"] = adam;
  }

  std::ofstream os(dir + "/manifest.json");
  if (!os) throw Error("cannot write checkpoint manifest in " + dir);
  os << man.dump(2) << "\n";
}

/// Restores parameter values (and optimizer moments) in place. The store
/// must already hold the same parameter names with the same shapes.
/// Returns the step recorded at save time.
template <class S>
inline std::int64_t load_checkpoint(const std::string& dir,
                                    ParamStore<S>& params,
                                    Adam<S>* opt = nullptr,
                                    std::string* extra_json = nullptr) {
  nlohmann::json man;
  {
    std::ifstream is(dir + "/manifest.json");
    if (!is) throw CheckpointCorrupt("missing manifest in " + dir);
    try {
      is >> man;
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointCorrupt(std::string("unreadable manifest: ") +
                              e.what());
    }
  }
  try {
    if (man.at("format") != "voxgen-checkpoint-1")
      throw CheckpointCorrupt("unknown checkpoint format");
    const std::string scalar = man.at("scalar");
    if (scalar != (sizeof(S) == 4 ? "f32" : "f64"))
      throw CheckpointCorrupt("checkpoint scalar type mismatch");

    const auto& plist = man.at("params");
    if (plist.size() != params.size())
      throw CheckpointCorrupt("parameter count mismatch");
    for (const auto& entry : plist) {
      const std::string name = entry.at("name");
      if (!params.has(name))
        throw CheckpointCorrupt("unknown parameter in checkpoint: " + name);
      Tensor<S> loaded = read_vgt1<S>(dir + "/" + std::string(entry.at("file")));
      Tensor<S>& dst = params.get(name);
      if (loaded.shape() != dst.shape())
        throw CheckpointCorrupt("shape mismatch for parameter " + name);
      dst.data() = loaded.data();
    }

    if (opt && man.contains("adam")) {
      const auto& adam = man.at("adam");
      opt->set_step_count(adam.at("step_count").get<std::int64_t>());
      auto& sl = opt->slots();
      const auto& slots = adam.at("slots");
      sl.resize(slots.size());
      for (std::size_t i = 0; i < sl.size(); ++i) {
        sl[i].m = read_vgt1<S>(dir + "/" +
                               std::string(slots[i].at("m"))).data();
        sl[i].v = read_vgt1<S>(dir + "/" +
                               std::string(slots[i].at("v"))).data();
      }
    }
    if (extra_json) *extra_json = man.at("extra").dump();
    return man.at("step").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointCorrupt(std::string("malformed manifest: ") + e.what());
  } catch (const BadMagic& e) {
    throw CheckpointCorrupt(std::string("corrupt tensor file: ") + e.what());
  } catch (const TruncatedFile& e) {
    throw CheckpointCorrupt(std::string("truncated tensor file: ") +
                            e.what());
  }
}

}  // namespace voxgen
