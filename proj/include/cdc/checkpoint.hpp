#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cdc/algorithm.hpp"
#include "cdc/nn.hpp"

namespace cdc {

constexpr std::uint32_t kCheckpointMagic = 0x43444331;  // "CDC1"
constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::string algo;
    std::string task;
    int n_agents = 0;
    int input_width = 0;
    std::map<std::string, std::string> extra;  // grid/delta/temperature etc.
};

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t x) {
    os.write(reinterpret_cast<const char*>(&x), sizeof(x));
}
inline std::uint64_t read_u64(std::istream& is) {
    std::uint64_t x = 0;
    is.read(reinterpret_cast<char*>(&x), sizeof(x));
    return x;
}
inline void write_str(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_str(std::istream& is) {
    const std::uint64_t n = read_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

}  // namespace detail

// Binary parameter serialization with shape headers; doubles round-trip
// bit-exactly.
inline void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                            const ParamList& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os.write(reinterpret_cast<const char*>(&kCheckpointMagic), sizeof(kCheckpointMagic));
    os.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof(kCheckpointVersion));
    detail::write_str(os, meta.algo);
    detail::write_str(os, meta.task);
    detail::write_u64(os, static_cast<std::uint64_t>(meta.n_agents));
    detail::write_u64(os, static_cast<std::uint64_t>(meta.input_width));
    detail::write_u64(os, meta.extra.size());
    for (const auto& [k, v] : meta.extra) {
        detail::write_str(os, k);
        detail::write_str(os, v);
    }
    detail::write_u64(os, params.size());
    for (const auto& np : params) {
        detail::write_str(os, np.name);
        detail::write_u64(os, np.t->shape.size());
        for (int d : np.t->shape) detail::write_u64(os, static_cast<std::uint64_t>(d));
        detail::write_u64(os, np.t->v.size());
        os.write(reinterpret_cast<const char*>(np.t->v.data()),
                 static_cast<std::streamsize>(np.t->v.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

struct LoadedCheckpoint {
    CheckpointMeta meta;
    std::vector<std::pair<std::string, std::vector<double>>> tensors;
    std::vector<std::vector<int>> shapes;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::uint32_t magic = 0, version = 0;
    is.read(reinterpret_cast<char*>(&magic), sizeof(magic));
    is.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (magic != kCheckpointMagic)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    if (version != kCheckpointVersion)
        throw std::runtime_error("load_checkpoint: unsupported version " +
                                 std::to_string(version));
    LoadedCheckpoint out;
    out.meta.algo = detail::read_str(is);
    out.meta.task = detail::read_str(is);
    out.meta.n_agents = static_cast<int>(detail::read_u64(is));
    out.meta.input_width = static_cast<int>(detail::read_u64(is));
    const std::uint64_t n_extra = detail::read_u64(is);
    for (std::uint64_t i = 0; i < n_extra; ++i) {
        std::string k = detail::read_str(is);
        out.meta.extra[k] = detail::read_str(is);
    }
    const std::uint64_t n_tensors = detail::read_u64(is);
    for (std::uint64_t i = 0; i < n_tensors; ++i) {
        std::string name = detail::read_str(is);
        const std::uint64_t rank = detail::read_u64(is);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(detail::read_u64(is));
        const std::uint64_t len = detail::read_u64(is);
        std::vector<double> vals(len);
        is.read(reinterpret_cast<char*>(vals.data()),
                static_cast<std::streamsize>(len * sizeof(double)));
        out.tensors.push_back({std::move(name), std::move(vals)});
        out.shapes.push_back(std::move(shape));
    }
    if (!is) throw std::runtime_error("load_checkpoint: truncated file " + path);
    return out;
}

inline CheckpointMeta checkpoint_meta_for(const Algorithm& algo, Task task,
                                          const AlgoHyper& hyper) {
    CheckpointMeta m;
    m.algo = algo.kind();
    m.task = task_name(task);
    m.n_agents = algo.n_agents();
    m.input_width = algo.input_width();
    m.extra["grid_dp"] = std::to_string(hyper.grid.dp);
    m.extra["grid_P"] = std::to_string(hyper.grid.P);
    m.extra["delta"] = std::to_string(hyper.delta);
    m.extra["temperature"] = std::to_string(hyper.temperature);
    return m;
}

// Rebuild an algorithm from a checkpoint. Shared-parameter algorithms accept
// an agent-count override; the observation width must still match what the
// parameters were built for.
inline std::unique_ptr<Algorithm> restore_algorithm(const LoadedCheckpoint& ck,
                                                    int n_override = 0) {
    const Task task = task_from_name(ck.meta.task);
    const int n = n_override > 0 ? n_override : ck.meta.n_agents;
    EnvConfig cfg = EnvConfig::make(task, n);
    if (padded_obs_width(cfg) != ck.meta.input_width)
        throw std::runtime_error(
            "restore_algorithm: observation width mismatch (checkpoint " +
            std::to_string(ck.meta.input_width) + ", task '" + ck.meta.task + "' with " +
            std::to_string(n) + " agents needs " + std::to_string(padded_obs_width(cfg)) + ")");
    AlgoHyper hyper;
    if (auto it = ck.meta.extra.find("grid_dp"); it != ck.meta.extra.end())
        hyper.grid.dp = std::stod(it->second);
    if (auto it = ck.meta.extra.find("grid_P"); it != ck.meta.extra.end())
        hyper.grid.P = std::stoi(it->second);
    if (auto it = ck.meta.extra.find("delta"); it != ck.meta.extra.end())
        hyper.delta = std::stod(it->second);
    if (auto it = ck.meta.extra.find("temperature"); it != ck.meta.extra.end())
        hyper.temperature = std::stod(it->second);
    Rng rng(0);  // parameters are overwritten right below
    auto algo = make_algorithm(ck.meta.algo, cfg, hyper, rng);
    algo->load_named(ck.tensors);
    return algo;
}

}  // namespace cdc
