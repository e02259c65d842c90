#pragma once

// Stack description files.
//
//   {
//     "energy_kev": 14.4125,                          optional
//     "substrate": "Si",                              optional, default "Si"
//     "materials": { "Pt": {"delta": .., "beta": ..} },   optional, merged over the base table
//     "nuclear": { "strength": 2.4e-4, "gamma_nev": 4.7 },  optional
//     "layers": [ {"material": "Pt", "thickness_nm": 0.5},
//                 {"material": "Fe57", "thickness_nm": 0.3, "abundance": 1.0}, ... ]
//   }
//
// A layer carrying "abundance" is the nuclear-resonant layer. Unknown keys are
// rejected. The base material table is the built-in one, or the JSON file named
// by FANO_CAVITY_MATERIALS ({ "name": {"delta": .., "beta": ..}, ... }).

#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fanocav/errors.hpp"
#include "fanocav/layersim.hpp"

namespace fanocav {

using nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw InputError(where + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!ok.count(it.key())) throw InputError(where + "." + it.key() + ": unknown key");
}

inline double get_number(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw InputError(where + ": missing key '" + key + "'");
    const json& v = obj.at(key);
    if (!v.is_number()) throw InputError(where + "." + key + ": expected a number");
    return v.get<double>();
}

inline std::string get_string(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw InputError(where + ": missing key '" + key + "'");
    const json& v = obj.at(key);
    if (!v.is_string()) throw InputError(where + "." + key + ": expected a string");
    return v.get<std::string>();
}

inline json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

} // namespace detail

inline MaterialTable parse_material_table(const json& j, const std::string& where = "materials") {
    if (!j.is_object()) throw InputError(where + ": expected an object");
    MaterialTable t;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string loc = where + "." + it.key();
        detail::reject_unknown_keys(it.value(), {"delta", "beta"}, loc);
        Material m{it.key(), detail::get_number(it.value(), "delta", loc), detail::get_number(it.value(), "beta", loc)};
        t[it.key()] = m;
    }
    return t;
}

/// Built-in table, or the file named by FANO_CAVITY_MATERIALS when set.
inline MaterialTable base_material_table() {
    if (const char* path = std::getenv("FANO_CAVITY_MATERIALS"); path && *path)
        return parse_material_table(detail::parse_json_file(path), path);
    return default_material_table();
}

inline LayerStack parse_stack(const json& j, MaterialTable table) {
    detail::reject_unknown_keys(j, {"energy_kev", "substrate", "materials", "nuclear", "layers"}, "stack");
    if (j.contains("materials"))
        for (auto& [name, m] : parse_material_table(j.at("materials"), "stack.materials")) table[name] = m;

    auto lookup = [&table](const std::string& name, const std::string& where) {
        auto it = table.find(name);
        if (it == table.end()) throw InputError(where + ": unknown material '" + name + "'");
        return it->second;
    };

    LayerStack s;
    if (j.contains("energy_kev")) s.energy_kev = detail::get_number(j, "energy_kev", "stack");
    s.substrate = lookup(j.contains("substrate") ? detail::get_string(j, "substrate", "stack") : "Si", "stack.substrate");

    NuclearSusceptibility nuc{kFe57LineKeV, kFe57NaturalWidthNeV, kFe57ResonantStrength, 1.0};
    if (j.contains("nuclear")) {
        const json& n = j.at("nuclear");
        detail::reject_unknown_keys(n, {"strength", "gamma_nev", "omega0_kev"}, "stack.nuclear");
        if (n.contains("strength")) nuc.strength = detail::get_number(n, "strength", "stack.nuclear");
        if (n.contains("gamma_nev")) nuc.gamma_nev = detail::get_number(n, "gamma_nev", "stack.nuclear");
        if (n.contains("omega0_kev")) nuc.omega0_kev = detail::get_number(n, "omega0_kev", "stack.nuclear");
    }

    if (!j.contains("layers") || !j.at("layers").is_array()) throw InputError("stack: 'layers' must be an array");
    const json& layers = j.at("layers");
    if (layers.empty()) throw InputError("stack.layers: at least one layer is required");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string loc = "stack.layers[" + std::to_string(i) + "]";
        const json& l = layers[i];
        detail::reject_unknown_keys(l, {"material", "thickness_nm", "abundance"}, loc);
        Layer layer{lookup(detail::get_string(l, "material", loc), loc), detail::get_number(l, "thickness_nm", loc),
                    std::nullopt};
        if (l.contains("abundance")) {
            NuclearSusceptibility ln = nuc;
            ln.abundance = detail::get_number(l, "abundance", loc);
            layer.nuclear = ln;
        }
        s.layers.push_back(std::move(layer));
    }
    validate(s);
    return s;
}

inline LayerStack load_stack(const std::string& path) {
    return parse_stack(detail::parse_json_file(path), base_material_table());
}

inline LayerStack parse_stack_text(const std::string& text, const MaterialTable& table = default_material_table()) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("stack: ") + e.what());
    }
    return parse_stack(j, table);
}

} // namespace fanocav
