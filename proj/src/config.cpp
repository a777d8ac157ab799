#include "dksg/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace dksg {

namespace {

[[noreturn]] void fail(int line, const std::string& what) {
    throw std::runtime_error("config: line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

float parse_float(const std::string& v, int line) {
    try {
        size_t used = 0;
        float f = std::stof(v, &used);
        if (used != v.size()) fail(line, "trailing characters in number '" + v + "'");
        return f;
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        fail(line, "expected a number, got '" + v + "'");
    }
}

int parse_int(const std::string& v, int line) {
    try {
        size_t used = 0;
        int i = std::stoi(v, &used);
        if (used != v.size()) fail(line, "trailing characters in number '" + v + "'");
        return i;
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        fail(line, "expected an integer, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& v, int line) {
    try {
        size_t used = 0;
        unsigned long long i = std::stoull(v, &used);
        if (used != v.size()) fail(line, "trailing characters in number '" + v + "'");
        return i;
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        fail(line, "expected an unsigned integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(line, "expected true/false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v, int line) {
    if (v.size() < 2 || v.front() != '[' || v.back() != ']')
        fail(line, "expected a bracketed list like [16, 24, 32, 48, 64]");
    std::vector<int> out;
    std::string inner = v.substr(1, v.size() - 2);
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) fail(line, "empty entry in list");
        out.push_back(parse_int(item, line));
    }
    if (out.empty()) fail(line, "empty list");
    return out;
}

}  // namespace

void RunConfig::validate() const {
    if (batch_size < 1) throw std::runtime_error("config: batch_size must be positive");
    if (image_size < 32 || image_size % 32 != 0)
        throw std::runtime_error("config: image_size must be a positive multiple of 32");
    if (epochs < 1) throw std::runtime_error("config: epochs must be positive");
    model.validate();
}

RunConfig parse_config(std::istream& in) {
    RunConfig c;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        size_t hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        std::string s = trim(raw);
        if (s.empty()) continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos) fail(line, "expected key = value");
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        if (key.empty()) fail(line, "missing key");
        if (val.empty()) fail(line, "missing value for '" + key + "'");

        if (key == "lr0")
            c.lr0 = parse_float(val, line);
        else if (key == "momentum")
            c.momentum = parse_float(val, line);
        else if (key == "weight_decay")
            c.weight_decay = parse_float(val, line);
        else if (key == "poly_power")
            c.poly_power = parse_float(val, line);
        else if (key == "batch_size")
            c.batch_size = parse_int(val, line);
        else if (key == "image_size")
            c.image_size = parse_int(val, line);
        else if (key == "epochs")
            c.epochs = parse_int(val, line);
        else if (key == "seed")
            c.seed = parse_u64(val, line);
        else if (key == "c_d")
            c.model.c_d = parse_int(val, line);
        else if (key == "d_model")
            c.model.d_model = parse_int(val, line);
        else if (key == "channels")
            c.model.channels = parse_int_list(val, line);
        else if (key == "blocks_per_stage")
            c.model.blocks_per_stage = parse_int(val, line);
        else if (key == "use_ea")
            c.model.use_ea = parse_bool(val, line);
        else if (key == "aug_flip")
            c.aug_flip = parse_bool(val, line);
        else if (key == "aug_rotate")
            c.aug_rotate = parse_bool(val, line);
        else if (key == "aug_crop")
            c.aug_crop = parse_bool(val, line);
        else
            fail(line, "unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    return parse_config(f);
}

}  // namespace dksg
