#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "yk/common.hpp"

namespace yk {

enum class Module { Conv, C3k2, SPPF, C2PSA, Upsample, Concat, C2f, Detect, Classify };

inline const char* module_name(Module m) {
    switch (m) {
        case Module::Conv: return "Conv";
        case Module::C3k2: return "C3k2";
        case Module::SPPF: return "SPPF";
        case Module::C2PSA: return "C2PSA";
        case Module::Upsample: return "Upsample";
        case Module::Concat: return "Concat";
        case Module::C2f: return "C2f";
        case Module::Detect: return "Detect";
        case Module::Classify: return "Classify";
    }
    return "?";
}

enum class Task { Detect, Classify };

struct LayerDecl {
    int index = 0;
    int line = 0;
    std::vector<int> from;  // -1 = previous layer
    std::int64_t repeats = 1;
    Module module = Module::Conv;
    std::map<std::string, std::string> args;
};

struct ScaleEntry {
    double depth = 1.0;
    double width = 1.0;
    std::int64_t max_channels = 1024;
};

struct ModelSpec {
    Task task = Task::Detect;
    std::int64_t num_classes = 80;
    std::map<std::string, ScaleEntry> scales;
    std::set<std::string> c3k_promote;  // variants where c3k=false is forced true
    std::vector<LayerDecl> layers;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::int64_t parse_int(const std::string& s, int line, const char* what) {
    try {
        size_t pos = 0;
        const long long v = std::stoll(trim(s), &pos);
        check(pos == trim(s).size(), "");
        return v;
    } catch (...) {
        fail("syntax error at line " + std::to_string(line) + ": bad integer for " +
             std::string(what) + ": '" + s + "'");
    }
}

inline double parse_float(const std::string& s, int line, const char* what) {
    try {
        size_t pos = 0;
        const double v = std::stod(trim(s), &pos);
        check(pos == trim(s).size(), "");
        return v;
    } catch (...) {
        fail("syntax error at line " + std::to_string(line) + ": bad number for " +
             std::string(what) + ": '" + s + "'");
    }
}

inline bool parse_bool(const std::string& s, int line, const char* what) {
    const std::string t = trim(s);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    fail("syntax error at line " + std::to_string(line) + ": bad bool for " +
         std::string(what) + ": '" + s + "'");
}

}  // namespace detail

inline ModelSpec parse_config(const std::string& text) {
    using namespace detail;
    ModelSpec spec;
    bool saw_task = false;
    std::string section;
    int index = 0;
    int head_count = 0;

    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;

        if (line.front() == '[') {
            check(line.back() == ']',
                  "syntax error at line " + std::to_string(lineno) + ": unterminated section");
            section = line.substr(1, line.size() - 2);
            check(section == "meta" || section == "scales" || section == "layers",
                  "syntax error at line " + std::to_string(lineno) + ": unknown section [" +
                      section + "]");
            continue;
        }

        if (section == "meta") {
            const auto eq = line.find('=');
            check(eq != std::string::npos,
                  "syntax error at line " + std::to_string(lineno) + ": expected key=value");
            const std::string key = trim(line.substr(0, eq));
            const std::string val = trim(line.substr(eq + 1));
            if (key == "task") {
                if (val == "detect") spec.task = Task::Detect;
                else if (val == "classify") spec.task = Task::Classify;
                else fail("syntax error at line " + std::to_string(lineno) + ": unknown task '" + val + "'");
                saw_task = true;
            } else if (key == "nc") {
                spec.num_classes = parse_int(val, lineno, "nc");
                check(spec.num_classes >= 1, "nc must be positive at line " + std::to_string(lineno));
            } else if (key == "c3k_variants") {
                for (const auto& v : split(val, ',')) {
                    const auto t = trim(v);
                    if (!t.empty()) spec.c3k_promote.insert(t);
                }
            } else {
                fail("syntax error at line " + std::to_string(lineno) + ": unknown meta key '" + key + "'");
            }
        } else if (section == "scales") {
            const auto eq = line.find('=');
            check(eq != std::string::npos,
                  "syntax error at line " + std::to_string(lineno) + ": expected variant = d,w,max");
            const std::string key = trim(line.substr(0, eq));
            const auto parts = split(line.substr(eq + 1), ',');
            check(parts.size() == 3, "syntax error at line " + std::to_string(lineno) +
                                         ": scale needs depth,width,max_channels");
            ScaleEntry e;
            e.depth = parse_float(parts[0], lineno, "depth");
            e.width = parse_float(parts[1], lineno, "width");
            e.max_channels = parse_int(parts[2], lineno, "max_channels");
            spec.scales[key] = e;
        } else if (section == "layers") {
            LayerDecl d;
            d.index = index;
            d.line = lineno;
            bool saw_module = false;
            std::istringstream ls(line);
            std::string tok;
            while (ls >> tok) {
                const auto eq = tok.find('=');
                check(eq != std::string::npos, "syntax error at line " + std::to_string(lineno) +
                                                   ": expected key=value token, got '" + tok + "'");
                const std::string key = tok.substr(0, eq);
                const std::string val = tok.substr(eq + 1);
                if (key == "from") {
                    for (const auto& p : split(val, ','))
                        d.from.push_back(static_cast<int>(parse_int(p, lineno, "from")));
                } else if (key == "repeats") {
                    d.repeats = parse_int(val, lineno, "repeats");
                    check(d.repeats >= 1, "repeats must be >= 1 at line " + std::to_string(lineno));
                } else if (key == "module") {
                    saw_module = true;
                    if (val == "Conv") d.module = Module::Conv;
                    else if (val == "C3k2") d.module = Module::C3k2;
                    else if (val == "SPPF") d.module = Module::SPPF;
                    else if (val == "C2PSA") d.module = Module::C2PSA;
                    else if (val == "Upsample") d.module = Module::Upsample;
                    else if (val == "Concat") d.module = Module::Concat;
                    else if (val == "C2f") d.module = Module::C2f;
                    else if (val == "Detect") d.module = Module::Detect;
                    else if (val == "Classify") d.module = Module::Classify;
                    else fail("unknown module name '" + val + "' at line " + std::to_string(lineno));
                } else if (key == "args") {
                    for (const auto& kv : split(val, ',')) {
                        if (trim(kv).empty()) continue;
                        const auto e2 = kv.find('=');
                        check(e2 != std::string::npos, "syntax error at line " +
                                                           std::to_string(lineno) +
                                                           ": bad arg '" + kv + "'");
                        d.args[trim(kv.substr(0, e2))] = trim(kv.substr(e2 + 1));
                    }
                } else {
                    fail("syntax error at line " + std::to_string(lineno) + ": unknown key '" + key + "'");
                }
            }
            check(saw_module, "syntax error at line " + std::to_string(lineno) + ": missing module=");
            if (d.from.empty()) d.from.push_back(-1);
            for (int f : d.from) {
                check(f >= -1, "bad source index at line " + std::to_string(lineno));
                check(f == -1 || f < d.index,
                      "forward reference at line " + std::to_string(lineno));
            }
            if (d.module == Module::Detect || d.module == Module::Classify) {
                ++head_count;
                check(head_count == 1, "duplicate head at line " + std::to_string(lineno));
                if (d.module == Module::Detect)
                    check(d.from.size() == 3,
                          "Detect must consume exactly three sources (line " +
                              std::to_string(lineno) + ")");
            }
            spec.layers.push_back(d);
            ++index;
        } else {
            fail("syntax error at line " + std::to_string(lineno) + ": content outside a section");
        }
    }

    check(!spec.layers.empty(), "config has no layers");
    check(saw_task, "config missing task= in [meta]");
    check(head_count == 1, "config must declare exactly one head layer");
    const auto& last = spec.layers.back();
    check(last.module == Module::Detect || last.module == Module::Classify,
          "head layer must be the final layer");
    check((spec.task == Task::Detect) == (last.module == Module::Detect),
          "head module does not match task");
    return spec;
}

struct ScaledLayer {
    int index = 0;
    std::vector<int> from;
    Module module = Module::Conv;
    std::int64_t repeats = 1;
    std::int64_t c = 0;         // scaled out-channels (where applicable)
    std::int64_t k = 3;
    std::int64_t stride = 1;
    bool c3k = false;
    bool shortcut = true;
    bool dw = false;            // Detect: depthwise-separable class branch
    double e = 0.5;
};

struct ScaledSpec {
    Task task = Task::Detect;
    std::int64_t num_classes = 80;
    std::string variant;
    std::vector<ScaledLayer> layers;
};

inline std::int64_t round_to_multiple_of_8(double x) {
    const auto r = static_cast<std::int64_t>(std::floor(x / 8.0 + 0.5)) * 8;
    return std::max<std::int64_t>(r, 8);
}

inline std::int64_t scale_repeats(std::int64_t r, double depth) {
    return std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::floor(static_cast<double>(r) * depth + 0.5)));
}

inline ScaledSpec apply_scale(const ModelSpec& spec, const std::string& variant) {
    const auto it = spec.scales.find(variant);
    check(it != spec.scales.end(), "unknown variant '" + variant + "'");
    const ScaleEntry sc = it->second;
    const bool promote = spec.c3k_promote.count(variant) > 0;

    ScaledSpec out;
    out.task = spec.task;
    out.num_classes = spec.num_classes;
    out.variant = variant;

    for (const auto& d : spec.layers) {
        ScaledLayer l;
        l.index = d.index;
        l.module = d.module;
        // resolve -1 to the previous layer; index -1 after resolution (only
        // possible for layer 0) means the network input
        for (int f : d.from) l.from.push_back(f == -1 ? d.index - 1 : f);

        auto arg = [&](const char* key) -> const std::string* {
            const auto a = d.args.find(key);
            return a == d.args.end() ? nullptr : &a->second;
        };

        l.repeats = d.repeats;
        switch (d.module) {
            case Module::Conv: {
                const auto* c = arg("c");
                check(c != nullptr, "Conv at line " + std::to_string(d.line) + " needs c=");
                l.c = round_to_multiple_of_8(
                    static_cast<double>(std::min(detail::parse_int(*c, d.line, "c"),
                                                 sc.max_channels)) * sc.width);
                if (const auto* k = arg("k")) l.k = detail::parse_int(*k, d.line, "k");
                if (const auto* s = arg("s")) l.stride = detail::parse_int(*s, d.line, "s");
                check(d.repeats == 1, "Conv does not repeat (line " + std::to_string(d.line) + ")");
                break;
            }
            case Module::C3k2:
            case Module::C2f: {
                const auto* c = arg("c");
                check(c != nullptr, "block at line " + std::to_string(d.line) + " needs c=");
                l.c = round_to_multiple_of_8(
                    static_cast<double>(std::min(detail::parse_int(*c, d.line, "c"),
                                                 sc.max_channels)) * sc.width);
                l.repeats = scale_repeats(d.repeats, sc.depth);
                if (const auto* e = arg("e")) l.e = detail::parse_float(*e, d.line, "e");
                if (const auto* s = arg("shortcut")) l.shortcut = detail::parse_bool(*s, d.line, "shortcut");
                else l.shortcut = d.module == Module::C3k2;  // C2f defaults to no shortcut
                if (d.module == Module::C3k2) {
                    if (const auto* f = arg("c3k")) l.c3k = detail::parse_bool(*f, d.line, "c3k");
                    if (promote) l.c3k = true;
                }
                break;
            }
            case Module::SPPF: {
                const auto* c = arg("c");
                check(c != nullptr, "SPPF at line " + std::to_string(d.line) + " needs c=");
                l.c = round_to_multiple_of_8(
                    static_cast<double>(std::min(detail::parse_int(*c, d.line, "c"),
                                                 sc.max_channels)) * sc.width);
                l.k = 5;
                if (const auto* k = arg("k")) l.k = detail::parse_int(*k, d.line, "k");
                break;
            }
            case Module::C2PSA: {
                const auto* c = arg("c");
                check(c != nullptr, "C2PSA at line " + std::to_string(d.line) + " needs c=");
                l.c = round_to_multiple_of_8(
                    static_cast<double>(std::min(detail::parse_int(*c, d.line, "c"),
                                                 sc.max_channels)) * sc.width);
                l.repeats = scale_repeats(d.repeats, sc.depth);
                break;
            }
            case Module::Upsample:
            case Module::Concat:
                break;
            case Module::Detect:
                if (const auto* dw = arg("dw")) l.dw = detail::parse_bool(*dw, d.line, "dw");
                break;
            case Module::Classify:
                // prediction-side widths are never scaled
                l.c = 1280;
                if (const auto* c = arg("c")) l.c = detail::parse_int(*c, d.line, "c");
                break;
        }
        out.layers.push_back(l);
    }
    return out;
}

}  // namespace yk
