// Copyright 2026 The stylebridge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end. Every subcommand reads defaults from the built-in
// configuration, then an optional --config file, then explicit flags.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "stylebridge/dataset.hpp"
#include "stylebridge/image_io.hpp"
#include "stylebridge/latent_analysis.hpp"
#include "stylebridge/pipeline.hpp"
#include "stylebridge/surgery.hpp"
#include "stylebridge/training.hpp"

namespace fs = std::filesystem;
using namespace stylebridge;

namespace {

struct Common {
    std::string config_file;
    std::vector<std::string> overrides;  // key=value

    PipelineConfig load() const {
        PipelineConfig c;
        if (!config_file.empty()) c.merge_file(config_file);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            c.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        return c;
    }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_file, "key=value configuration file")->check(CLI::ExistingFile);
    app->add_option("--set", c.overrides, "Override one configuration key (key=value); repeatable");
}

/// Image source: a manifest directory or a procedurally generated toy domain.
struct DataSource {
    std::string dir;
    std::string toy;
    std::string domain;
    int toy_n = 512;
    std::uint64_t toy_seed = 0;

    Dataset load(const GeneratorConfig& arch) const {
        if (!toy.empty()) return make_toy_dataset(toy, toy_n, arch.max_resolution(), toy_seed, arch.image_channels);
        if (dir.empty()) throw ConfigError("give --data <dir> or --toy <domain>");
        return load_image_directory(dir, arch.max_resolution(), arch.image_channels, domain);
    }
};

void add_data(CLI::App* app, DataSource& d) {
    app->add_option("--data", d.dir, "Dataset directory with manifest.txt");
    app->add_option("--toy", d.toy, "Generate a toy glyph domain instead (A, B, C or D)");
    app->add_option("--domain", d.domain, "Domain tag for a directory dataset");
    app->add_option("--toy-n", d.toy_n, "Toy dataset size");
    app->add_option("--toy-seed", d.toy_seed, "Toy dataset seed");
}

void emit(const json& report, const std::string& path) {
    const std::string text = report.dump(2) + "\n";
    std::cout << text;
    if (!path.empty()) {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + path);
        out << text;
    }
}

json model_summary(const GeneratorModel& m, const std::string& digest) {
    return json{{"digest", digest},
                {"domain", m.metadata().domain},
                {"origin", m.metadata().origin},
                {"parents", m.metadata().parents},
                {"lineage", m.metadata().lineage}};
}

ImageTensor read_input(const std::string& path, const GeneratorModel& m) {
    ImageTensor img = read_png(path, m.arch().image_channels == 3);
    img = match_channels(img, m.arch().image_channels);
    if (img.height != m.resolution() || img.width != m.resolution()) img = resize(center_crop(img), m.resolution());
    return img;
}

std::string indexed(const std::string& prefix, int i) { return prefix + "_" + std::to_string(i) + ".png"; }

/// Latent record stored in the checkpoint container format.
void save_latent(const InversionResult& r, const std::string& model_digest_hex, const fs::path& path) {
    Container c;
    c.metadata = json{{"kind", "latent"}, {"model", model_digest_hex}, {"steps", r.steps}, {"best_step", r.best_step}};
    const int d = static_cast<int>(r.w.dim());
    c.tensors.emplace_back("w", Tensor(Shape{d}, r.w.values));
    if (r.v) c.tensors.emplace_back("v", Tensor(Shape{d}, *r.v));
    write_file(path, serialize(c));
}

void write_trace(const std::vector<double>& trace, const std::string& path) {
    if (path.empty()) return;
    std::ofstream out(path, std::ios::trunc);
    out.precision(17);
    out << "step,loss\n";
    for (std::size_t i = 0; i < trace.size(); ++i) out << i << ',' << trace[i] << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stylebridge: style-based generator surgery, inversion and translation"};
    app.require_subcommand(1);
    Common common;

    // show-config ----------------------------------------------------------
    auto* show = app.add_subcommand("show-config", "Print every configuration key with its effective value");
    add_common(show, common);
    show->callback([&] { std::cout << common.load().to_text(); });

    // make-dataset ---------------------------------------------------------
    auto* mk = app.add_subcommand("make-dataset", "Write a toy glyph domain as PNG files plus manifest");
    std::string mk_domain = "A", mk_out;
    int mk_n = 256, mk_res = 64, mk_ch = 3;
    std::uint64_t mk_seed = 0;
    mk->add_option("--domain", mk_domain, "Toy domain (A, B, C or D)");
    mk->add_option("--n", mk_n, "Number of images");
    mk->add_option("--res", mk_res, "Resolution");
    mk->add_option("--channels", mk_ch, "1 or 3");
    mk->add_option("--seed", mk_seed, "Seed");
    mk->add_option("--out", mk_out, "Output directory")->required();
    mk->callback([&] {
        write_image_directory(make_toy_dataset(mk_domain, mk_n, mk_res, mk_seed, mk_ch), mk_out);
        emit(json{{"domain", mk_domain}, {"images", mk_n}, {"out", mk_out}}, "");
    });

    // train ----------------------------------------------------------------
    auto* train = app.add_subcommand("train", "Train a base generator on one domain");
    add_common(train, common);
    DataSource train_data;
    add_data(train, train_data);
    std::string train_out, train_disc, train_trace;
    train->add_option("--out", train_out, "Generator checkpoint")->required();
    train->add_option("--disc-out", train_disc, "Discriminator checkpoint");
    train->add_option("--trace", train_trace, "Loss trace CSV (appended)");
    train->callback([&] {
        const auto cfg = common.load();
        const auto arch = cfg.generator();
        const auto r = train_base(train_data.load(arch), cfg.train(), arch);
        const auto digest = save_checkpoint(r.generator, train_out);
        if (!train_disc.empty()) save_discriminator(r.discriminator, train_disc);
        if (!train_trace.empty()) append_loss_trace(train_trace, r.trace);
        emit(model_summary(r.generator, digest), "");
    });

    // finetune -------------------------------------------------------------
    auto* ft = app.add_subcommand("finetune", "Fine-tune a generator on a target domain");
    add_common(ft, common);
    DataSource ft_data;
    add_data(ft, ft_data);
    std::string ft_base, ft_base_disc, ft_out, ft_disc_out, ft_trace;
    bool ft_freeze_fc = false;
    std::vector<std::string> ft_patterns;
    ft->add_option("--base", ft_base, "Base generator checkpoint")->required()->check(CLI::ExistingFile);
    ft->add_option("--base-disc", ft_base_disc, "Discriminator to continue from")->check(CLI::ExistingFile);
    ft->add_flag("--freeze-fc", ft_freeze_fc, "Freeze the mapping network");
    ft->add_option("--freeze", ft_patterns, "Freeze parameters with this name prefix; repeatable");
    ft->add_option("--out", ft_out, "Output generator checkpoint")->required();
    ft->add_option("--disc-out", ft_disc_out, "Output discriminator checkpoint");
    ft->add_option("--trace", ft_trace, "Loss trace CSV (appended)");
    ft->callback([&] {
        const auto cfg = common.load();
        const auto base = load_checkpoint(ft_base);
        FreezeSet freeze{ft_patterns};
        if (ft_freeze_fc) freeze.name_patterns.push_back("map.");
        std::optional<Discriminator> disc;
        if (!ft_base_disc.empty()) disc = load_discriminator(ft_base_disc);
        const auto r = finetune(base, ft_data.load(base.arch()), freeze, cfg.finetune(), disc ? &*disc : nullptr);
        const auto digest = save_checkpoint(r.generator, ft_out);
        if (!ft_disc_out.empty()) save_discriminator(r.discriminator, ft_disc_out);
        if (!ft_trace.empty()) append_loss_trace(ft_trace, r.trace);
        emit(model_summary(r.generator, digest), "");
    });

    // swap -----------------------------------------------------------------
    auto* sw = app.add_subcommand("swap", "Copy coarse synthesis blocks from a source into a tuned model");
    std::string sw_source, sw_tuned, sw_out;
    int sw_l = 0;
    bool sw_conv_only = false;
    sw->add_option("--source", sw_source, "Source (base) checkpoint")->required()->check(CLI::ExistingFile);
    sw->add_option("--tuned", sw_tuned, "Tuned checkpoint")->required()->check(CLI::ExistingFile);
    sw->add_option("--l", sw_l, "Number of blocks to swap, starting at 8x8")->required();
    sw->add_flag("--conv-only", sw_conv_only, "Swap convolution weights and biases only");
    sw->add_option("--out", sw_out, "Output checkpoint")->required();
    sw->callback([&] {
        const auto out = swap_layers(load_checkpoint(sw_source), load_checkpoint(sw_tuned), SwapDepth{sw_l},
                                     sw_conv_only ? SwapScope::ConvOnly : SwapScope::WholeBlock);
        emit(model_summary(out, save_checkpoint(out, sw_out)), "");
    });

    // transform ------------------------------------------------------------
    auto* tr = app.add_subcommand("transform", "Freeze-FC fine-tune followed by a layer swap");
    add_common(tr, common);
    DataSource tr_data;
    add_data(tr, tr_data);
    std::string tr_base, tr_base_disc, tr_out, tr_intermediate;
    std::optional<int> tr_l;
    bool tr_no_freeze_fc = false;
    std::vector<std::string> tr_patterns;
    tr->add_option("--base", tr_base, "Base generator checkpoint")->required()->check(CLI::ExistingFile);
    tr->add_option("--base-disc", tr_base_disc, "Discriminator to continue from")->check(CLI::ExistingFile);
    tr->add_option("--l", tr_l, "Swap depth (default: config swap_depth)");
    tr->add_flag("--no-freeze-fc", tr_no_freeze_fc, "Do not freeze the mapping network");
    tr->add_option("--freeze", tr_patterns, "Additional frozen name prefix; repeatable");
    tr->add_option("--out", tr_out, "Output checkpoint")->required();
    tr->add_option("--intermediate", tr_intermediate, "Where to write the fine-tuned model (default: <out>.ft)");
    tr->callback([&] {
        const auto cfg = common.load();
        const auto base = load_checkpoint(tr_base);
        TransformationRecipe recipe;
        recipe.freeze.name_patterns = tr_patterns;
        if (!tr_no_freeze_fc) recipe.freeze.name_patterns.push_back("map.");
        recipe.finetune_cfg = cfg.finetune();
        recipe.swap_depth.l = tr_l.value_or(static_cast<int>(cfg.get_int("swap_depth")));
        recipe.swap_scope = swap_scope_from_string(cfg.get("swap_scope"));
        std::optional<Discriminator> disc;
        if (!tr_base_disc.empty()) disc = load_discriminator(tr_base_disc);
        const fs::path inter = tr_intermediate.empty() ? fs::path(tr_out + ".ft") : fs::path(tr_intermediate);
        const auto r = transform(base, tr_data.load(base.arch()), recipe, inter, disc ? &*disc : nullptr);
        auto report = model_summary(r.model, save_checkpoint(r.model, tr_out));
        report["intermediate"] = inter.string();
        emit(report, "");
    });

    // distance -------------------------------------------------------------
    auto* dist = app.add_subcommand("distance", "Monte-Carlo model distance between two generators");
    add_common(dist, common);
    std::string dist_a, dist_b, dist_report, dist_metric = "lpips";
    std::optional<int> dist_n;
    std::optional<std::uint64_t> dist_seed;
    dist->add_option("--a", dist_a, "First checkpoint")->required()->check(CLI::ExistingFile);
    dist->add_option("--b", dist_b, "Second checkpoint")->required()->check(CLI::ExistingFile);
    dist->add_option("--n", dist_n, "Number of samples (default: config distance_samples)");
    dist->add_option("--seed", dist_seed, "Seed (default: config distance_seed)");
    dist->add_option("--metric", dist_metric, "lpips (default) or triangle")
        ->check(CLI::IsMember({"lpips", "triangle"}));
    dist->add_option("--report", dist_report, "Also write the report to this file");
    dist->callback([&] {
        const auto cfg = common.load();
        const auto metric = dist_metric == "lpips" ? PerceptualMetric::lpips_proxy() : PerceptualMetric::triangle_metric();
        const auto r = model_distance(load_checkpoint(dist_a), load_checkpoint(dist_b),
                                      dist_n.value_or(static_cast<int>(cfg.get_int("distance_samples"))),
                                      dist_seed.value_or(cfg.get_u64("distance_seed")), metric);
        emit(json(r), dist_report);
    });

    // directions -----------------------------------------------------------
    auto* dir = app.add_subcommand("directions", "Eigendirections of the stacked style affines");
    add_common(dir, common);
    std::string dir_model, dir_report, dir_edit_prefix;
    std::optional<int> dir_top_k;
    bool dir_first_only = false;
    std::vector<double> dir_alphas;
    int dir_index = 0;
    std::uint64_t dir_z_seed = 0;
    dir->add_option("--model", dir_model, "Generator checkpoint")->required()->check(CLI::ExistingFile);
    dir->add_option("--top-k", dir_top_k, "Keep the k largest eigenpairs (default: config top_k)");
    dir->add_flag("--first-only", dir_first_only, "Use only the first style affine");
    dir->add_option("--report", dir_report, "Also write the report to this file");
    dir->add_option("--edit", dir_edit_prefix, "Write edits along --index as <prefix>_<i>.png");
    dir->add_option("--index", dir_index, "Direction used for --edit");
    dir->add_option("--alphas", dir_alphas, "Edit strengths for --edit")->delimiter(',');
    dir->add_option("--z-seed", dir_z_seed, "Latent seed for --edit");
    dir->callback([&] {
        const auto cfg = common.load();
        const auto m = load_checkpoint(dir_model);
        const auto top_k = dir_top_k ? dir_top_k : cfg.get_optional_int("top_k", "all");
        const auto basis =
            semantic_basis(extract_affine(m, dir_first_only ? AffineSelection::FirstOnly : AffineSelection::AllSlots), top_k);
        std::vector<std::vector<double>> vectors;
        for (int i = 0; i < basis.rank(); ++i)
            vectors.emplace_back(basis.eigenvectors.col(i).data(), basis.eigenvectors.col(i).data() + basis.dim());
        emit(json{{"model", basis.source_model_digest},
                  {"rank", basis.rank()},
                  {"eigenvalues", std::vector<double>(basis.eigenvalues.data(), basis.eigenvalues.data() + basis.rank())},
                  {"eigenvectors", vectors}},
             dir_report);
        if (!dir_edit_prefix.empty()) {
            const auto w = map_latent(m, sample_z(dir_z_seed, 1, m.arch().z_dim)[0]);
            for (std::size_t i = 0; i < dir_alphas.size(); ++i)
                write_png(synthesize(m, make_style_plan(m, edit_latent(w, basis, dir_index, dir_alphas[i])),
                                     cfg.get_u64("noise_seed")),
                          indexed(dir_edit_prefix, static_cast<int>(i)));
        }
    });

    // invert ---------------------------------------------------------------
    auto* inv = app.add_subcommand("invert", "Invert an image into a generator's embedded space");
    add_common(inv, common);
    std::string inv_model, inv_image, inv_mode = "baseline", inv_out, inv_trace, inv_latent, inv_report;
    std::optional<int> inv_steps, inv_top_k;
    inv->add_option("--model", inv_model, "Generator checkpoint")->required()->check(CLI::ExistingFile);
    inv->add_option("--image", inv_image, "Input PNG")->required()->check(CLI::ExistingFile);
    inv->add_option("--mode", inv_mode, "baseline or constrained")->check(CLI::IsMember({"baseline", "constrained"}));
    inv->add_option("--steps", inv_steps, "Optimization steps (default: config inversion_steps)");
    inv->add_option("--top-k", inv_top_k, "Basis truncation for constrained mode");
    inv->add_option("--out", inv_out, "Reconstruction PNG")->required();
    inv->add_option("--trace", inv_trace, "Loss trace CSV");
    inv->add_option("--latent", inv_latent, "Latent record (checkpoint container)");
    inv->add_option("--report", inv_report, "Also write the report to this file");
    inv->callback([&] {
        const auto cfg = common.load();
        const auto m = load_checkpoint(inv_model);
        TranslationOptions opt;
        opt.inversion = inversion_mode_from_string(inv_mode);
        opt.inversion_cfg = cfg.inversion();
        if (inv_steps) opt.inversion_cfg.steps = *inv_steps;
        opt.top_k = inv_top_k ? inv_top_k : cfg.get_optional_int("top_k", "all");
        const auto r = invert_with(read_input(inv_image, m), m, opt);
        write_png(r.final_image, inv_out);
        write_trace(r.loss_trace, inv_trace);
        const std::string digest = model_digest(m);
        if (!inv_latent.empty()) save_latent(r, digest, inv_latent);
        emit(json{{"mode", inv_mode},
                  {"steps", r.steps},
                  {"best_step", r.best_step},
                  {"initial_loss", r.loss_trace.front()},
                  {"final_loss", r.loss_trace.back()},
                  {"w", r.w.values}},
             inv_report);
    });

    // translate ------------------------------------------------------------
    auto* tl = app.add_subcommand("translate", "Translate an image between two generators");
    add_common(tl, common);
    std::string tl_source, tl_target, tl_input, tl_mode = "single", tl_reference, tl_out, tl_inv_mode = "baseline";
    std::string tl_registry, tl_from, tl_to;
    std::optional<int> tl_k, tl_n, tl_steps, tl_top_k;
    std::optional<std::uint64_t> tl_style_seed;
    tl->add_option("--source", tl_source, "Source checkpoint")->check(CLI::ExistingFile);
    tl->add_option("--target", tl_target, "Target checkpoint")->check(CLI::ExistingFile);
    tl->add_option("--registry", tl_registry, "Registry file (with --from/--to instead of --source/--target)");
    tl->add_option("--from", tl_from, "Registry tag of the source model");
    tl->add_option("--to", tl_to, "Registry tag of the target model");
    tl->add_option("--input", tl_input, "Input PNG")->required()->check(CLI::ExistingFile);
    tl->add_option("--mode", tl_mode, "single, multimodal or reference")
        ->check(CLI::IsMember({"single", "multimodal", "reference"}));
    tl->add_option("--reference", tl_reference, "Reference PNG for reference mode")->check(CLI::ExistingFile);
    tl->add_option("--k", tl_k, "Split index (default: config split_index)");
    tl->add_option("--n", tl_n, "Number of styles for multimodal mode (default: config styles)");
    tl->add_option("--style-seed", tl_style_seed, "Seed of the appearance latents");
    tl->add_option("--inversion", tl_inv_mode, "baseline or constrained")->check(CLI::IsMember({"baseline", "constrained"}));
    tl->add_option("--steps", tl_steps, "Inversion steps");
    tl->add_option("--top-k", tl_top_k, "Basis truncation for constrained inversion");
    tl->add_option("--out", tl_out, "Output PNG (multimodal: prefix for <prefix>_<i>.png)")->required();
    tl->callback([&] {
        const auto cfg = common.load();
        std::optional<GeneratorModel> source, target;
        bool lineage_mismatch = false;
        if (!tl_registry.empty()) {
            const auto reg = ModelRegistry::load(tl_registry);
            source = load_checkpoint(reg.resolve(tl_from));
            target = load_checkpoint(reg.resolve(tl_to));
            lineage_mismatch = !shared_lineage(*source, *target);
            if (lineage_mismatch) std::cerr << "warning: models do not share a base lineage\n";
        } else {
            if (tl_source.empty() || tl_target.empty()) throw ConfigError("give --source and --target, or --registry");
            source = load_checkpoint(tl_source);
            target = load_checkpoint(tl_target);
        }
        TranslationOptions opt;
        opt.inversion = inversion_mode_from_string(tl_inv_mode);
        opt.inversion_cfg = cfg.inversion();
        if (tl_steps) opt.inversion_cfg.steps = *tl_steps;
        opt.top_k = tl_top_k ? tl_top_k : cfg.get_optional_int("top_k", "all");
        opt.split_index = tl_k ? tl_k : cfg.get_optional_int("split_index", "default");
        const auto input = read_input(tl_input, *source);
        Translation t;
        if (tl_mode == "single") {
            t = translate(input, *source, *target, opt);
            write_png(t.outputs[0], tl_out);
        } else if (tl_mode == "multimodal") {
            t = translate_multimodal(input, *source, *target, tl_n.value_or(static_cast<int>(cfg.get_int("styles"))),
                                     tl_style_seed.value_or(cfg.get_u64("style_seed")), opt);
            for (std::size_t i = 0; i < t.outputs.size(); ++i) write_png(t.outputs[i], indexed(tl_out, static_cast<int>(i)));
        } else {
            if (tl_reference.empty()) throw ConfigError("reference mode needs --reference");
            t = translate_reference(input, read_input(tl_reference, *target), *source, *target, opt);
            write_png(t.outputs[0], tl_out);
        }
        emit(json{{"mode", tl_mode},
                  {"outputs", t.outputs.size()},
                  {"split_index", t.split_index},
                  {"content_loss", t.content.loss_trace.back()},
                  {"lineage_mismatch", lineage_mismatch}},
             "");
    });

    // registry -------------------------------------------------------------
    auto* reg = app.add_subcommand("registry", "Manage the domain-tag registry");
    reg->require_subcommand(1);
    std::string reg_file = "registry.txt", reg_tag, reg_path;
    reg->add_option("--file", reg_file, "Registry file");
    auto* reg_add = reg->add_subcommand("add", "Register a checkpoint under a tag");
    reg_add->add_option("tag", reg_tag, "Domain tag")->required();
    reg_add->add_option("path", reg_path, "Checkpoint path")->required()->check(CLI::ExistingFile);
    reg_add->callback([&] {
        auto r = ModelRegistry::load(reg_file);
        load_checkpoint(reg_path);  // verifies the digest before registering
        r.add(reg_tag, reg_path);
        r.save(reg_file);
    });
    auto* reg_list = reg->add_subcommand("list", "List registered models");
    reg_list->callback([&] {
        json out = json::array();
        const auto registry = ModelRegistry::load(reg_file);
        for (const auto& [tag, path] : registry.entries()) {
            const auto m = load_checkpoint(path);
            out.push_back(json{{"tag", tag}, {"path", path.string()}, {"domain", m.metadata().domain},
                               {"root", lineage_root(m)}});
        }
        emit(out, "");
    });

    // sample ---------------------------------------------------------------
    auto* smp = app.add_subcommand("sample", "Write generator samples as PNG");
    add_common(smp, common);
    std::string smp_model, smp_out;
    int smp_n = 8;
    std::uint64_t smp_seed = 0;
    smp->add_option("--model", smp_model, "Generator checkpoint")->required()->check(CLI::ExistingFile);
    smp->add_option("--n", smp_n, "Number of samples");
    smp->add_option("--seed", smp_seed, "Latent seed");
    smp->add_option("--out", smp_out, "Prefix for <prefix>_<i>.png")->required();
    smp->callback([&] {
        const auto cfg = common.load();
        const auto m = load_checkpoint(smp_model);
        const auto zs = sample_z(smp_seed, smp_n, m.arch().z_dim);
        for (int i = 0; i < smp_n; ++i)
            write_png(synthesize(m, make_style_plan(m, map_latent(m, zs[i])), derive_seed(cfg.get_u64("noise_seed"), i)),
                      indexed(smp_out, i));
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
