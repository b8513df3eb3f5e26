#include "tabgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "tabgen/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace tabgen {

namespace {

constexpr char kMagic[8] = {'T', 'A', 'B', 'G', 'E', 'N', 'C', 'K'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_doubles(std::vector<uint8_t>& out, const std::vector<double>& v) {
    std::size_t at = out.size();
    out.resize(at + v.size() * sizeof(double));
    std::memcpy(out.data() + at, v.data(), v.size() * sizeof(double));
}

struct Reader {
    const std::vector<uint8_t>& b;
    std::size_t at = 0;

    void need(std::size_t n) const {
        if (at + n > b.size()) throw ValidationError("checkpoint: truncated file");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[at + i]) << (8 * i);
        at += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[at + i]) << (8 * i);
        at += 8;
        return v;
    }
    std::vector<double> doubles(std::size_t count) {
        need(count * sizeof(double));
        std::vector<double> v(count);
        std::memcpy(v.data(), b.data() + at, count * sizeof(double));
        at += count * sizeof(double);
        return v;
    }
};

}  // namespace

uint64_t fnv1a64(const uint8_t* data, std::size_t n) {
    uint64_t h = 14695981039346656037ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<uint8_t> Checkpoint::serialize() const {
    nlohmann::json header;
    header["schema"] = nlohmann::json::parse(schema.to_json());
    header["quantile"] = nlohmann::json::parse(qt.to_json());
    header["model"] = nlohmann::json::parse(config.to_json());
    header["schedule"] = {{"num_cols", schedules.num_cols()},
                          {"cat_cols", schedules.cat_cols()},
                          {"sigma_min", schedules.sigma_min()},
                          {"sigma_max", schedules.sigma_max()},
                          {"delta", schedules.delta()}};
    header["train"] = {{"seed", seed}, {"epoch", epoch}, {"loss", loss}};
    header["payload"] = {{"params", params.size()},
                         {"rho_raw", schedules.num_cols()},
                         {"k_raw", schedules.cat_cols()}};
    std::string text = header.dump();

    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    put_u32(out, kVersion);
    put_u32(out, static_cast<uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    put_doubles(out, params);
    put_doubles(out, schedules.rho_raw());
    put_doubles(out, schedules.k_raw());
    put_u64(out, fnv1a64(out.data(), out.size()));
    return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8 + 4 + 4 + 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw ValidationError("checkpoint: not a checkpoint file");
    uint64_t want = fnv1a64(bytes.data(), bytes.size() - 8);
    Reader tail{bytes, bytes.size() - 8};
    if (tail.u64() != want) throw ValidationError("checkpoint: integrity hash mismatch");

    Reader r{bytes, 8};
    uint32_t version = r.u32();
    if (version != kVersion)
        throw ValidationError("checkpoint: unsupported format version " +
                              std::to_string(version));
    uint32_t hlen = r.u32();
    r.need(hlen);
    std::string text(bytes.begin() + static_cast<long>(r.at),
                     bytes.begin() + static_cast<long>(r.at + hlen));
    r.at += hlen;

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint: bad header: ") + e.what());
    }

    Checkpoint ck;
    try {
        ck.schema = TableSchema::from_json(header.at("schema").dump());
        ck.qt = QuantileTransform::from_json(header.at("quantile").dump());
        ck.config = DenoiserConfig::from_json(header.at("model").dump());
        const auto& sc = header.at("schedule");
        ck.schedules = ScheduleSet(sc.at("num_cols").get<std::size_t>(),
                                   sc.at("cat_cols").get<std::size_t>(), 7.0, 1.0,
                                   sc.at("sigma_min").get<double>(),
                                   sc.at("sigma_max").get<double>(),
                                   sc.at("delta").get<double>());
        const auto& tr = header.at("train");
        ck.seed = tr.at("seed").get<uint64_t>();
        ck.epoch = tr.at("epoch").get<int64_t>();
        ck.loss = tr.at("loss").get<double>();
        const auto& pl = header.at("payload");
        std::size_t n_params = pl.at("params").get<std::size_t>();
        std::size_t n_rho = pl.at("rho_raw").get<std::size_t>();
        std::size_t n_k = pl.at("k_raw").get<std::size_t>();
        if (n_rho != ck.schedules.num_cols() || n_k != ck.schedules.cat_cols())
            throw ValidationError("checkpoint: payload counts disagree with schedule shape");
        ck.params = r.doubles(n_params);
        ck.schedules.rho_raw() = r.doubles(n_rho);
        ck.schedules.k_raw() = r.doubles(n_k);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint: bad header: ") + e.what());
    }
    if (r.at != bytes.size() - 8)
        throw ValidationError("checkpoint: trailing bytes after payload");

    ck.schema.validate(true);
    return ck;
}

void Checkpoint::save(const std::string& path) const {
    std::vector<uint8_t> bytes = serialize();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ValidationError("checkpoint: cannot open '" + path + "' for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
    if (!os) throw ComputeError("checkpoint: short write to '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("checkpoint: cannot open '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                               std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

Denoiser Checkpoint::make_denoiser() const {
    Denoiser model(schema, config);
    if (model.param_count() != params.size())
        throw ValidationError("checkpoint: weight count does not match the architecture");
    model.params().values() = params;
    return model;
}

}  // namespace tabgen
