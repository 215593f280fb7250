#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "notegate/audio.hpp"
#include "notegate/decode.hpp"
#include "notegate/eval.hpp"
#include "notegate/fixtures.hpp"
#include "notegate/ioutil.hpp"
#include "notegate/labels.hpp"
#include "notegate/mel.hpp"
#include "notegate/network.hpp"
#include "notegate/phoneme.hpp"
#include "notegate/pitch.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace notegate;

namespace {

struct FeatureFlags {
    int sample_rate = 16000;
    int n_mels = 80;
    int hop = 320;
    int fft = 1024;

    FeatureConfig to_config() const
    {
        FeatureConfig cfg;
        cfg.sample_rate = sample_rate;
        cfg.n_mels = n_mels;
        cfg.hop = hop;
        cfg.fft_size = fft;
        cfg.fmax_hz = sample_rate / 2.0;
        return cfg;
    }

    void add_options(CLI::App* cmd)
    {
        cmd->add_option("--sr", sample_rate, "Canonical sample rate (Hz)")
            ->capture_default_str();
        cmd->add_option("--n-mels", n_mels, "Mel bins per frame")->capture_default_str();
        cmd->add_option("--hop", hop, "Hop size in samples")->capture_default_str();
        cmd->add_option("--fft", fft, "FFT size in samples")->capture_default_str();
    }

    json to_json() const
    {
        return {{"sr", sample_rate}, {"n_mels", n_mels}, {"hop", hop}, {"fft", fft}};
    }
};

MelSpectrogram load_mel_features(const std::string& wav_path, const FeatureConfig& cfg)
{
    AudioClip clip = load_audio(wav_path);
    if (clip.sample_rate != cfg.sample_rate) clip = resample(clip, cfg.sample_rate);
    return mel_spectrogram(clip, cfg);
}

json match_json(const MatchConfig& cfg)
{
    return {{"onset_tolerance_sec", cfg.onset_tolerance},
            {"offset_min_tolerance_sec", cfg.offset_min_tolerance},
            {"offset_ratio", cfg.offset_ratio},
            {"pitch_tolerance_cents", cfg.pitch_tolerance_cents}};
}

json prf_json(const Prf& p, std::size_t n_ref, std::size_t n_est)
{
    return {{"precision", p.precision}, {"recall", p.recall},      {"f1", p.f1},
            {"matched", p.matches.size()}, {"n_ref", n_ref}, {"n_est", n_est}};
}

void emit_report(const json& report, const std::string& out_path)
{
    const std::string text = report.dump(2) + "\n";
    if (out_path.empty())
        std::cout << text;
    else
        write_file_atomic(out_path, text);
}

// Songs paired by identical file name across the two directories; anything
// unpaired is an error that names the files.
std::vector<std::string> paired_song_names(const std::string& ref_dir, const std::string& est_dir)
{
    auto list = [](const std::string& dir) {
        if (!fs::is_directory(dir)) throw DataError(cat("not a directory: ", dir));
        std::vector<std::string> names;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".tsv")
                names.push_back(entry.path().filename().string());
        std::sort(names.begin(), names.end());
        return names;
    };
    const auto ref_names = list(ref_dir);
    const auto est_names = list(est_dir);
    if (ref_names.empty()) throw DataError(cat("no .tsv note files in ", ref_dir));

    std::string problems;
    for (const auto& n : ref_names)
        if (!std::binary_search(est_names.begin(), est_names.end(), n))
            problems += cat("  missing in ", est_dir, ": ", n, "\n");
    for (const auto& n : est_names)
        if (!std::binary_search(ref_names.begin(), ref_names.end(), n))
            problems += cat("  missing in ", ref_dir, ": ", n, "\n");
    if (!problems.empty()) throw DataError(cat("unpaired note files:\n", problems));
    return ref_names;
}

std::vector<NoteEvent> load_sorted_notes(const std::string& path)
{
    auto notes = read_notes_tsv(path);
    std::stable_sort(notes.begin(), notes.end(),
                     [](const NoteEvent& a, const NoteEvent& b) { return a.onset < b.onset; });
    return notes;
}

void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& fn)
{
    jobs = std::max(1u, jobs);
    if (jobs == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex error_mutex;
    for (unsigned w = 0; w < std::min<std::size_t>(jobs, count); ++w) {
        pool.emplace_back([&] {
            while (!failed) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (const std::exception& e) {
                    std::lock_guard lock(error_mutex);
                    if (!failed) first_error = e.what();
                    failed = true;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failed) throw DataError(first_error);
}

std::string tolerance_key(double tol)
{
    return cat(static_cast<int>(std::lround(tol * 1000.0)), "ms");
}

int run(int argc, char** argv)
{
    CLI::App app{"notegate: phoneme-informed singing transcription toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML-style config file; explicit flags win")
        ->envname("NOTEGATE_CONFIG");

    // ------------------------------------------------------------- features
    auto* cmd_features = app.add_subcommand("features", "Compute a log-mel spectrogram");
    {
        auto wav = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto tsv = std::make_shared<std::string>();
        auto normalized = std::make_shared<bool>(false);
        auto flags = std::make_shared<FeatureFlags>();
        cmd_features->add_option("input", *wav, "Input WAV")->required();
        cmd_features->add_option("-o,--output", *out, "Output F32M matrix")->required();
        cmd_features->add_option("--tsv", *tsv, "Also write a TSV copy");
        cmd_features->add_flag("--normalized", *normalized, "Scale the matrix to [-1, 1]");
        flags->add_options(cmd_features);
        cmd_features->callback([=] {
            MelSpectrogram mel = load_mel_features(*wav, flags->to_config());
            if (*normalized) mel = normalize_mel(mel);
            write_f32m(*out, mel.frames, mel.grid);
            if (!tsv->empty()) write_matrix_tsv(*tsv, mel.frames);
        });
    }

    // ------------------------------------------------------------------ ppg
    auto* cmd_ppg = app.add_subcommand("ppg", "Run the phoneme classifier to a posteriorgram");
    {
        auto wav = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto graph_path = std::make_shared<std::string>();
        auto weights_path = std::make_shared<std::string>();
        auto inventory_path = std::make_shared<std::string>();
        auto flags = std::make_shared<FeatureFlags>();
        cmd_ppg->add_option("input", *wav, "Input WAV")->required();
        cmd_ppg->add_option("-o,--output", *out, "Output F32M posteriorgram")->required();
        cmd_ppg->add_option("--graph", *graph_path, "Phoneme model graph JSON")->required();
        cmd_ppg->add_option("--weights", *weights_path, "Phoneme model weights manifest")
            ->required();
        cmd_ppg->add_option("--inventory", *inventory_path, "Phoneme inventory file")->required();
        flags->add_options(cmd_ppg);
        cmd_ppg->callback([=] {
            const MelSpectrogram mel = load_mel_features(*wav, flags->to_config());
            const ModelGraph graph = ModelGraph::load(*graph_path);
            const WeightStore weights = WeightStore::load(*weights_path);
            const PhonemeInventory inv = PhonemeInventory::load(*inventory_path);
            const Posteriorgram ppg = forward_phoneme_model(mel, graph, weights, inv);
            write_f32m(*out, ppg.frames, ppg.grid);
        });
    }

    // ------------------------------------------------------------ transcribe
    auto* cmd_transcribe = app.add_subcommand("transcribe", "WAV to pitched note events");
    {
        auto wav = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto graph_path = std::make_shared<std::string>();
        auto weights_path = std::make_shared<std::string>();
        auto pgraph_path = std::make_shared<std::string>();
        auto pweights_path = std::make_shared<std::string>();
        auto inventory_path = std::make_shared<std::string>();
        auto dump_mel = std::make_shared<std::string>();
        auto dump_ppg = std::make_shared<std::string>();
        auto dump_post = std::make_shared<std::string>();
        auto dump_f0 = std::make_shared<std::string>();
        auto unpitched_out = std::make_shared<std::string>();
        auto onset_th = std::make_shared<double>(0.2);
        auto offset_th = std::make_shared<double>(0.2);
        auto fmin = std::make_shared<double>(65.4);
        auto fmax = std::make_shared<double>(1046.5);
        auto no_fallback = std::make_shared<bool>(false);
        auto flags = std::make_shared<FeatureFlags>();
        cmd_transcribe->add_option("input", *wav, "Input WAV")->required();
        cmd_transcribe->add_option("-o,--output", *out, "Output note TSV")->required();
        cmd_transcribe->add_option("--graph", *graph_path, "Note model graph JSON")->required();
        cmd_transcribe->add_option("--weights", *weights_path, "Note model weights manifest")
            ->required();
        cmd_transcribe->add_option("--phoneme-graph", *pgraph_path, "Phoneme model graph JSON")
            ->required();
        cmd_transcribe
            ->add_option("--phoneme-weights", *pweights_path, "Phoneme model weights manifest")
            ->required();
        cmd_transcribe->add_option("--inventory", *inventory_path, "Phoneme inventory file")
            ->required();
        cmd_transcribe->add_option("--onset-th", *onset_th, "Onset decode threshold")
            ->capture_default_str();
        cmd_transcribe->add_option("--offset-th", *offset_th, "Offset decode threshold")
            ->capture_default_str();
        cmd_transcribe->add_option("--fmin", *fmin, "Pitch tracking lower bound (Hz)")
            ->capture_default_str();
        cmd_transcribe->add_option("--fmax", *fmax, "Pitch tracking upper bound (Hz)")
            ->capture_default_str();
        cmd_transcribe->add_flag("--no-unvoiced-fallback", *no_fallback,
                                 "Drop notes with no voiced frames instead of falling back");
        cmd_transcribe->add_option("--dump-mel", *dump_mel, "Write the log-mel F32M");
        cmd_transcribe->add_option("--dump-ppg", *dump_ppg, "Write the posteriorgram F32M");
        cmd_transcribe->add_option("--dump-posteriors", *dump_post,
                                   "Write the onset/offset/activation F32M");
        cmd_transcribe->add_option("--dump-f0", *dump_f0, "Write the F0 contour TSV");
        cmd_transcribe->add_option("--unpitched-out", *unpitched_out,
                                   "Also write every decoded note without pitch");
        flags->add_options(cmd_transcribe);
        cmd_transcribe->callback([=] {
            const FeatureConfig fcfg = flags->to_config();
            AudioClip clip = load_audio(*wav);
            if (clip.sample_rate != fcfg.sample_rate) clip = resample(clip, fcfg.sample_rate);
            const MelSpectrogram mel = mel_spectrogram(clip, fcfg);
            if (!dump_mel->empty()) write_f32m(*dump_mel, mel.frames, mel.grid);

            const ModelGraph pgraph = ModelGraph::load(*pgraph_path);
            const WeightStore pweights = WeightStore::load(*pweights_path);
            const PhonemeInventory inv = PhonemeInventory::load(*inventory_path);
            const Posteriorgram ppg = forward_phoneme_model(mel, pgraph, pweights, inv);
            if (!dump_ppg->empty()) write_f32m(*dump_ppg, ppg.frames, ppg.grid);

            const ModelGraph graph = ModelGraph::load(*graph_path);
            const WeightStore weights = WeightStore::load(*weights_path);
            const FramedMatrix post = forward_note_model(mel, ppg, graph, weights);
            if (!dump_post->empty()) write_f32m(*dump_post, post.m, post.grid);

            PitchConfig pcfg;
            pcfg.sample_rate = fcfg.sample_rate;
            pcfg.hop = fcfg.hop;
            pcfg.fmin_hz = *fmin;
            pcfg.fmax_hz = *fmax;
            const F0Contour f0 = track_f0(clip, pcfg);
            if (!dump_f0->empty()) save_f0(*dump_f0, f0);

            DecodeConfig dcfg;
            dcfg.onset_threshold = *onset_th;
            dcfg.offset_threshold = *offset_th;
            dcfg.unvoiced_pitch_fallback = !*no_fallback;
            const auto posteriors = FramePosteriors::from_matrix(post.m, post.grid);
            const Transcription result = transcribe(posteriors, f0, dcfg);
            write_notes_tsv(*out, result.pitched);
            if (!unpitched_out->empty()) write_notes_tsv(*unpitched_out, result.unpitched);
        });
    }

    // ---------------------------------------------------------------- pitch
    auto* cmd_pitch = app.add_subcommand("pitch", "Pitch tracking");
    auto* cmd_pitch_track = cmd_pitch->add_subcommand("track", "Track F0 with probabilistic YIN");
    {
        auto wav = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto fmin = std::make_shared<double>(65.4);
        auto fmax = std::make_shared<double>(1046.5);
        auto sr = std::make_shared<int>(16000);
        auto hop = std::make_shared<int>(320);
        cmd_pitch->require_subcommand(1);
        cmd_pitch_track->add_option("input", *wav, "Input WAV")->required();
        cmd_pitch_track->add_option("-o,--output", *out, "Output F0 TSV")->required();
        cmd_pitch_track->add_option("--fmin", *fmin, "Lower bound (Hz)")->capture_default_str();
        cmd_pitch_track->add_option("--fmax", *fmax, "Upper bound (Hz)")->capture_default_str();
        cmd_pitch_track->add_option("--sr", *sr, "Canonical sample rate")->capture_default_str();
        cmd_pitch_track->add_option("--hop", *hop, "Hop size in samples")->capture_default_str();
        cmd_pitch_track->callback([=] {
            AudioClip clip = load_audio(*wav);
            if (clip.sample_rate != *sr) clip = resample(clip, *sr);
            PitchConfig cfg;
            cfg.sample_rate = *sr;
            cfg.hop = *hop;
            cfg.fmin_hz = *fmin;
            cfg.fmax_hz = *fmax;
            save_f0(*out, track_f0(clip, cfg));
        });
    }

    // --------------------------------------------------------------- decode
    auto* cmd_decode = app.add_subcommand("decode", "Posteriorgram (+F0) to note events");
    {
        auto post_path = std::make_shared<std::string>();
        auto f0_path = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto unpitched_out = std::make_shared<std::string>();
        auto onset_th = std::make_shared<double>(0.2);
        auto offset_th = std::make_shared<double>(0.2);
        auto no_fallback = std::make_shared<bool>(false);
        cmd_decode->add_option("--posteriors", *post_path, "F32M with onset/offset/activation")
            ->required();
        cmd_decode->add_option("--f0", *f0_path, "F0 TSV for pitch assignment");
        cmd_decode->add_option("-o,--output", *out, "Output note TSV")->required();
        cmd_decode->add_option("--unpitched-out", *unpitched_out,
                               "Also write every decoded note without pitch");
        cmd_decode->add_option("--onset-th", *onset_th, "Onset threshold")->capture_default_str();
        cmd_decode->add_option("--offset-th", *offset_th, "Offset threshold")
            ->capture_default_str();
        cmd_decode->add_flag("--no-unvoiced-fallback", *no_fallback,
                             "Drop notes with no voiced frames instead of falling back");
        cmd_decode->callback([=] {
            const FramedMatrix fm = read_f32m(*post_path);
            const auto posteriors = FramePosteriors::from_matrix(fm.m, fm.grid);
            DecodeConfig cfg;
            cfg.onset_threshold = *onset_th;
            cfg.offset_threshold = *offset_th;
            cfg.unvoiced_pitch_fallback = !*no_fallback;
            if (f0_path->empty()) {
                write_notes_tsv(*out, decode_notes(posteriors, cfg));
                return;
            }
            const F0Contour f0 = load_f0(*f0_path);
            const Transcription result = transcribe(posteriors, f0, cfg);
            write_notes_tsv(*out, result.pitched);
            if (!unpitched_out->empty()) write_notes_tsv(*unpitched_out, result.unpitched);
        });
    }

    // --------------------------------------------------------------- labels
    auto* cmd_labels = app.add_subcommand("labels", "Note TSV to framewise labels");
    {
        auto notes_path = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto frames = std::make_shared<std::size_t>(0);
        auto hop = std::make_shared<double>(0.020);
        auto smooth = std::make_shared<int>(0);
        cmd_labels->add_option("input", *notes_path, "Input note TSV")->required();
        cmd_labels->add_option("-o,--output", *out, "Output F32M labels")->required();
        cmd_labels->add_option("--frames", *frames, "Frame count T")->required();
        cmd_labels->add_option("--hop", *hop, "Hop in seconds")->capture_default_str();
        cmd_labels->add_option("-N,--smooth", *smooth,
                               "Triangular smoothing scale (odd; 0 disables)");
        cmd_labels->callback([=] {
            const auto notes = load_sorted_notes(*notes_path);
            FrameGrid grid;
            grid.hop_seconds = *hop;
            FrameLabels labels = notes_to_frames(notes, *frames, grid);
            if (*smooth > 0) labels = smooth_labels(labels, *smooth);
            write_f32m(*out, labels.to_matrix(), labels.grid);
        });
    }

    // --------------------------------------------------------------- smooth
    auto* cmd_smooth = app.add_subcommand("smooth", "Triangular label smoothing");
    {
        auto in_path = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto scale = std::make_shared<int>(5);
        cmd_smooth->add_option("input", *in_path, "Input F32M labels (T x 3)")->required();
        cmd_smooth->add_option("-o,--output", *out, "Output F32M labels")->required();
        cmd_smooth->add_option("-N,--scale", *scale, "Window scale (odd)")
            ->capture_default_str();
        cmd_smooth->callback([=] {
            const FramedMatrix fm = read_f32m(*in_path);
            const FrameLabels labels = FrameLabels::from_matrix(fm.m, fm.grid);
            const FrameLabels smoothed = smooth_labels(labels, *scale);
            write_f32m(*out, smoothed.to_matrix(), smoothed.grid);
        });
    }

    // ------------------------------------------------------------- ctc-loss
    auto* cmd_ctc = app.add_subcommand("ctc-loss", "CTC loss of a posteriorgram against a target");
    {
        auto ppg_path = std::make_shared<std::string>();
        auto target_path = std::make_shared<std::string>();
        auto inventory_path = std::make_shared<std::string>();
        auto grad_path = std::make_shared<std::string>();
        auto recon_path = std::make_shared<std::string>();
        auto recon_target_path = std::make_shared<std::string>();
        cmd_ctc->add_option("--ppg", *ppg_path, "F32M posteriorgram")->required();
        cmd_ctc->add_option("--target", *target_path, "Target phoneme sequence file")->required();
        cmd_ctc->add_option("--inventory", *inventory_path, "Phoneme inventory file")->required();
        cmd_ctc->add_option("--grad", *grad_path, "Write the loss gradient as F32M");
        cmd_ctc->add_option("--recon", *recon_path, "Reconstructed mel F32M (adds L_recon)");
        cmd_ctc->add_option("--recon-target", *recon_target_path,
                            "Normalized mel target F32M (with --recon)");
        cmd_ctc->callback([=] {
            const PhonemeInventory inv = PhonemeInventory::load(*inventory_path);
            const FramedMatrix fm = read_f32m(*ppg_path);
            Posteriorgram ppg{fm.m, fm.grid, inv};
            ppg.validate();
            const PhonemeSequence target = read_phoneme_sequence(*target_path, inv);
            const double ctc = ctc_loss(ppg, target);
            if (!grad_path->empty()) write_f32m(*grad_path, ctc_loss_grad(ppg, target), fm.grid);
            if (recon_path->empty() != recon_target_path->empty())
                throw DataError("--recon and --recon-target must be given together");
            if (!recon_path->empty()) {
                const FramedMatrix rec = read_f32m(*recon_path);
                const FramedMatrix tgt = read_f32m(*recon_target_path);
                const double recon = reconstruction_loss(
                    MelSpectrogram{rec.m, rec.grid, true}, MelSpectrogram{tgt.m, tgt.grid, true});
                std::printf("ctc\t%.10g\nrecon\t%.10g\nppg\t%.10g\n", ctc, recon,
                            ppg_loss(ctc, recon));
            } else {
                std::printf("%.10g\n", ctc);
            }
        });
    }

    // ------------------------------------------------------------- evaluate
    auto* cmd_evaluate = app.add_subcommand("evaluate", "Score estimated notes against reference");
    {
        auto ref_dir = std::make_shared<std::string>();
        auto est_dir = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto per_song = std::make_shared<std::string>();
        auto tolerance = std::make_shared<double>(0.05);
        auto jobs = std::make_shared<unsigned>(1);
        cmd_evaluate->add_option("ref_dir", *ref_dir, "Reference note TSV directory")->required();
        cmd_evaluate->add_option("est_dir", *est_dir, "Estimated note TSV directory")->required();
        cmd_evaluate->add_option("-o,--output", *out, "Report JSON path (default stdout)");
        cmd_evaluate->add_option("--per-song", *per_song, "Per-song TSV path");
        cmd_evaluate->add_option("--tolerance", *tolerance, "Onset tolerance in seconds")
            ->capture_default_str();
        cmd_evaluate->add_option("--jobs", *jobs, "Parallel workers")->capture_default_str();
        cmd_evaluate->callback([=] {
            MatchConfig cfg;
            cfg.onset_tolerance = *tolerance;
            const auto names = paired_song_names(*ref_dir, *est_dir);
            std::vector<ScoreReport> reports(names.size());
            parallel_for(names.size(), *jobs, [&](std::size_t i) {
                const auto ref = load_sorted_notes((fs::path(*ref_dir) / names[i]).string());
                const auto est = load_sorted_notes((fs::path(*est_dir) / names[i]).string());
                reports[i] = score(ref, est, cfg);
            });

            struct Slot {
                const char* key;
                const Prf& (*get)(const ScoreReport&);
            };
            static const Slot slots[] = {
                {"COn", [](const ScoreReport& r) -> const Prf& { return r.con; }},
                {"COff", [](const ScoreReport& r) -> const Prf& { return r.coff; }},
                {"COnOff", [](const ScoreReport& r) -> const Prf& { return r.conoff; }},
                {"COnP", [](const ScoreReport& r) -> const Prf& { return r.conp; }},
                {"COnPOff", [](const ScoreReport& r) -> const Prf& { return r.conpoff; }},
            };

            json report;
            report["tolerance"] = tolerance_key(*tolerance);
            report["config"] = match_json(cfg);
            report["config"]["jobs"] = *jobs;
            json songs = json::object();
            for (std::size_t i = 0; i < names.size(); ++i) {
                json entry;
                for (const auto& slot : slots)
                    entry[slot.key] =
                        prf_json(slot.get(reports[i]), reports[i].n_ref, reports[i].n_est);
                songs[names[i]] = entry;
            }
            report["songs"] = songs;

            json micro = json::object(), macro = json::object();
            for (const auto& slot : slots) {
                std::size_t m = 0, nr = 0, ne = 0;
                double sp = 0, sr_ = 0, sf = 0;
                for (const auto& r : reports) {
                    const Prf& p = slot.get(r);
                    m += p.matches.size();
                    nr += r.n_ref;
                    ne += r.n_est;
                    sp += p.precision;
                    sr_ += p.recall;
                    sf += p.f1;
                }
                const double precision = ne ? double(m) / double(ne) : (nr == 0 ? 1.0 : 0.0);
                const double recall = nr ? double(m) / double(nr) : (ne == 0 ? 1.0 : 0.0);
                const double f1 = precision + recall > 0
                                      ? 2 * precision * recall / (precision + recall)
                                      : (nr == 0 && ne == 0 ? 1.0 : 0.0);
                micro[slot.key] = {{"precision", precision}, {"recall", recall}, {"f1", f1},
                                   {"matched", m},           {"n_ref", nr},      {"n_est", ne}};
                macro[slot.key] = {{"precision", sp / reports.size()},
                                   {"recall", sr_ / reports.size()},
                                   {"f1", sf / reports.size()}};
            }
            report["micro"] = micro;
            report["macro"] = macro;
            emit_report(report, *out);

            if (!per_song->empty()) {
                std::string text = "song\tmetric\tprecision\trecall\tf1\n";
                char buf[256];
                for (std::size_t i = 0; i < names.size(); ++i)
                    for (const auto& slot : slots) {
                        const Prf& p = slot.get(reports[i]);
                        std::snprintf(buf, sizeof buf, "%s\t%s\t%.6f\t%.6f\t%.6f\n",
                                      names[i].c_str(), slot.key, p.precision, p.recall, p.f1);
                        text += buf;
                    }
                write_file_atomic(*per_song, text);
            }
        });
    }

    // -------------------------------------------------------------- analyze
    auto* cmd_analyze = app.add_subcommand("analyze", "Transition/re-onset recall analysis");
    {
        auto ref_dir = std::make_shared<std::string>();
        auto est_dir = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto tolerance = std::make_shared<double>(0.05);
        auto jobs = std::make_shared<unsigned>(1);
        cmd_analyze->add_option("ref_dir", *ref_dir, "Reference note TSV directory")->required();
        cmd_analyze->add_option("est_dir", *est_dir, "Estimated note TSV directory")->required();
        cmd_analyze->add_option("-o,--output", *out, "Report JSON path (default stdout)");
        cmd_analyze->add_option("--tolerance", *tolerance, "Onset tolerance in seconds")
            ->capture_default_str();
        cmd_analyze->add_option("--jobs", *jobs, "Parallel workers")->capture_default_str();
        cmd_analyze->callback([=] {
            MatchConfig cfg;
            cfg.onset_tolerance = *tolerance;
            const auto names = paired_song_names(*ref_dir, *est_dir);
            std::vector<OnsetTypeRecall> recalls(names.size());
            parallel_for(names.size(), *jobs, [&](std::size_t i) {
                const auto ref = load_sorted_notes((fs::path(*ref_dir) / names[i]).string());
                const auto est = load_sorted_notes((fs::path(*est_dir) / names[i]).string());
                recalls[i] = onset_type_recall(ref, est, cfg);
            });

            auto entry_json = [](const OnsetTypeRecall::Entry& e) {
                json j{{"total", e.total}, {"matched", e.matched}};
                if (e.recall)
                    j["recall"] = *e.recall;
                else
                    j["recall"] = nullptr;
                return j;
            };

            json report;
            report["tolerance"] = tolerance_key(*tolerance);
            report["config"] = match_json(cfg);
            json songs = json::object();
            OnsetTypeRecall total;
            for (std::size_t i = 0; i < names.size(); ++i) {
                songs[names[i]] = {{"plain", entry_json(recalls[i].plain)},
                                   {"transition", entry_json(recalls[i].transition)},
                                   {"re-onset", entry_json(recalls[i].reonset)}};
                for (auto [dst, src] :
                     {std::pair{&total.plain, &recalls[i].plain},
                      std::pair{&total.transition, &recalls[i].transition},
                      std::pair{&total.reonset, &recalls[i].reonset}}) {
                    dst->total += src->total;
                    dst->matched += src->matched;
                }
            }
            for (auto* e : {&total.plain, &total.transition, &total.reonset})
                if (e->total > 0) e->recall = double(e->matched) / double(e->total);
            report["songs"] = songs;
            report["types"] = {{"plain", entry_json(total.plain)},
                               {"transition", entry_json(total.transition)},
                               {"re-onset", entry_json(total.reonset)}};
            emit_report(report, *out);
        });
    }

    // ---------------------------------------------------------------- sweep
    auto* cmd_sweep = app.add_subcommand("sweep", "Decode-threshold sweep over a validation set");
    {
        auto post_dir = std::make_shared<std::string>();
        auto ref_dir = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto tolerance = std::make_shared<double>(0.05);
        cmd_sweep->add_option("--posteriors-dir", *post_dir, "Directory of F32M posteriors")
            ->required();
        cmd_sweep->add_option("--ref-dir", *ref_dir, "Directory of reference note TSVs")
            ->required();
        cmd_sweep->add_option("-o,--output", *out, "Report JSON path (default stdout)");
        cmd_sweep->add_option("--tolerance", *tolerance, "Onset tolerance in seconds")
            ->capture_default_str();
        cmd_sweep->callback([=] {
            if (!fs::is_directory(*post_dir))
                throw DataError(cat("not a directory: ", *post_dir));
            std::vector<SweepItem> items;
            std::vector<std::string> stems;
            for (const auto& entry : fs::directory_iterator(*post_dir))
                if (entry.is_regular_file() && entry.path().extension() == ".f32m")
                    stems.push_back(entry.path().stem().string());
            std::sort(stems.begin(), stems.end());
            if (stems.empty()) throw DataError(cat("no .f32m posteriors in ", *post_dir));
            for (const auto& stem : stems) {
                SweepItem item;
                const FramedMatrix fm =
                    read_f32m((fs::path(*post_dir) / (stem + ".f32m")).string());
                item.posteriors = FramePosteriors::from_matrix(fm.m, fm.grid);
                item.ref = load_sorted_notes((fs::path(*ref_dir) / (stem + ".tsv")).string());
                items.push_back(std::move(item));
            }

            MatchConfig cfg;
            cfg.onset_tolerance = *tolerance;
            const auto thresholds = default_sweep_thresholds();
            const SweepResult result = sweep_threshold(items, cfg, thresholds);

            json report;
            report["config"] = match_json(cfg);
            report["thresholds"] = result.thresholds;
            json scores = json::array();
            for (const auto& p : result.scores)
                scores.push_back(
                    {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}});
            report["scores"] = scores;
            report["best_threshold"] = result.best_threshold;
            emit_report(report, *out);
        });
    }

    // ------------------------------------------------------------- fixtures
    auto* cmd_fixtures = app.add_subcommand("fixtures", "Generate synthetic test assets");
    {
        auto out_dir = std::make_shared<std::string>();
        cmd_fixtures->add_option("--out-dir", *out_dir, "Destination directory")->required();
        cmd_fixtures->callback([=] {
            const FixturePaths paths = write_fixture_set(*out_dir);
            json j{{"wav", paths.wav},
                   {"notes", paths.notes},
                   {"inventory", paths.inventory},
                   {"phoneme_graph", paths.phoneme_graph},
                   {"phoneme_weights", paths.phoneme_weights},
                   {"note_graph", paths.note_graph},
                   {"note_weights", paths.note_weights}};
            std::cout << j.dump(2) << "\n";
        });
    }

    // Let --config (an app-level option) be written after the subcommand too.
    for (auto* sub : app.get_subcommands(nullptr)) {
        sub->fallthrough();
        for (auto* nested : sub->get_subcommands(nullptr)) nested->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help and friends
        app.exit(e);
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    try {
        return run(argc, argv);
    } catch (const notegate::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
