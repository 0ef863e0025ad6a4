#include "proxytrain/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "proxytrain/errors.hpp"
#include "proxytrain/rng.hpp"

namespace proxytrain {

namespace {

constexpr const char* kMagic = "proxytrain-checkpoint v1";

std::string hex(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void checkpoint_save(const std::filesystem::path& path, const std::vector<Parameter>& params,
                     const std::string& config_snapshot) {
    std::ofstream os(path);
    if (!os) throw IoError("checkpoint_save: cannot open " + path.string());
    os << kMagic << "\n";
    os << "config_hash: " << hex(fnv1a(config_snapshot)) << "\n";
    os << "config_bytes: " << config_snapshot.size() << "\n";
    os << config_snapshot;
    os << "params: " << params.size() << "\n";
    char buf[48];
    for (const Parameter& p : params) {
        std::snprintf(buf, sizeof(buf), "%.17g", p.lr_multiplier);
        os << "param " << p.name << " lr_multiplier " << buf << " weight_decay "
           << (p.weight_decay ? 1 : 0) << "\n";
        p.value.write_text(os);
    }
    if (!os) throw IoError("checkpoint_save: write failed for " + path.string());
}

Checkpoint checkpoint_load(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_config_hash) {
    std::ifstream is(path);
    if (!is) throw IoError("checkpoint_load: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != kMagic) {
        throw IoError("checkpoint_load: bad magic in " + path.string());
    }

    Checkpoint out;
    std::string tok;
    if (!(is >> tok) || tok != "config_hash:" || !(is >> std::hex >> out.config_hash)) {
        throw IoError("checkpoint_load: corrupt header (config_hash)");
    }
    is >> std::dec;
    std::size_t config_bytes = 0;
    if (!(is >> tok) || tok != "config_bytes:" || !(is >> config_bytes)) {
        throw IoError("checkpoint_load: corrupt header (config_bytes)");
    }
    is.get();  // newline after the byte count
    out.config_snapshot.resize(config_bytes);
    is.read(out.config_snapshot.data(), static_cast<std::streamsize>(config_bytes));
    if (is.gcount() != static_cast<std::streamsize>(config_bytes)) {
        throw IoError("checkpoint_load: truncated config snapshot");
    }
    if (fnv1a(out.config_snapshot) != out.config_hash) {
        throw IoError("checkpoint_load: config snapshot does not match its hash (file corrupt)");
    }
    if (expected_config_hash && *expected_config_hash != out.config_hash) {
        throw IoError("checkpoint_load: config hash mismatch: expected " +
                      hex(*expected_config_hash) + ", checkpoint has " + hex(out.config_hash));
    }

    std::size_t n_params = 0;
    if (!(is >> tok) || tok != "params:" || !(is >> n_params)) {
        throw IoError("checkpoint_load: corrupt header (params)");
    }
    std::getline(is, line);  // consume end of line
    for (std::size_t i = 0; i < n_params; ++i) {
        Parameter p;
        int decay = 1;
        if (!(is >> tok) || tok != "param" || !(is >> p.name) || !(is >> tok) ||
            tok != "lr_multiplier" || !(is >> p.lr_multiplier) || !(is >> tok) ||
            tok != "weight_decay" || !(is >> decay)) {
            throw IoError("checkpoint_load: truncated or corrupt parameter header (param " +
                          std::to_string(i) + ")");
        }
        p.weight_decay = decay != 0;
        std::getline(is, line);
        try {
            p.value = Tensor::read_text(is);
        } catch (const IoError& e) {
            throw IoError("checkpoint_load: param '" + p.name + "': " + e.what());
        }
        out.params.push_back(std::move(p));
    }
    return out;
}

}  // namespace proxytrain
