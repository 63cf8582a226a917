// tests/tasks_test.cc

// Copyright 2026  Flowmel Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "flowmel/dsp.h"
#include "flowmel/flow.h"
#include "flowmel/tasks.h"

using namespace flowmel;

namespace {

SynthCorpusConfig small_corpus_config() {
  SynthCorpusConfig cfg;
  cfg.n_utterances = 8;
  cfg.duration_lo_s = 0.3;
  cfg.duration_hi_s = 0.6;
  cfg.n_speakers = 2;
  cfg.symbol_vocab_size = 8;
  return cfg;
}

double achieved_snr_db(const Waveform& clean, const Waveform& mixture) {
  const Vec noise = mixture.samples - clean.samples;
  return 10.0 * std::log10(clean.samples.cast<double>().squaredNorm() /
                           noise.cast<double>().squaredNorm());
}

}  // namespace

TEST_CASE("synthetic corpus determinism and alignment integrity") {
  const auto cfg = small_corpus_config();
  Rng a(cfg.seed), b(cfg.seed);
  const auto corpus_a = make_synth_speech(cfg, a);
  const auto corpus_b = make_synth_speech(cfg, b);
  REQUIRE(corpus_a.size() == corpus_b.size());

  for (size_t i = 0; i < corpus_a.size(); ++i) {
    CHECK((corpus_a[i].wave.samples.array() ==
           corpus_b[i].wave.samples.array())
              .all());
    const int frames = alignment_frames(corpus_a[i].wave);
    // Throws unless the segments tile [0, frames) exactly.
    const auto ids = expand_alignment(corpus_a[i].alignment, frames);
    CHECK(static_cast<int>(ids.size()) == frames);
    for (int id : ids) CHECK(id >= 0);
  }
}

TEST_CASE("speaker profiles are spectrally distinguishable") {
  auto cfg = small_corpus_config();
  cfg.n_utterances = 100;
  cfg.n_speakers = 2;
  Rng rng(3);
  const auto corpus = make_synth_speech(cfg, rng);

  // Mean Mel vector per utterance, grouped by speaker.
  std::map<int, std::vector<Eigen::VectorXf>> by_speaker;
  for (const auto& utt : corpus) {
    const auto mel = wave_to_logmel(utt.wave);
    by_speaker[utt.speaker].push_back(
        mel.values.colwise().mean().transpose());
  }
  REQUIRE(by_speaker.size() == 2);
  const auto& s0 = by_speaker[0];
  const auto& s1 = by_speaker[1];

  double within = 0.0, between = 0.0;
  int n_within = 0, n_between = 0;
  for (const auto* group : {&s0, &s1}) {
    for (size_t i = 0; i < group->size(); ++i)
      for (size_t j = i + 1; j < group->size(); ++j) {
        within += ((*group)[i] - (*group)[j]).norm();
        ++n_within;
      }
  }
  for (const auto& a : s0)
    for (const auto& b : s1) {
      between += (a - b).norm();
      ++n_between;
    }
  CHECK(between / n_between > within / n_within);
}

TEST_CASE("enhancement example construction") {
  auto cfg = small_corpus_config();
  cfg.n_utterances = 1;
  cfg.duration_lo_s = 0.5;
  cfg.duration_hi_s = 0.5;
  Rng rng(5);
  const auto corpus = make_synth_speech(cfg, rng);
  const Waveform& clean = corpus[0].wave;
  const Waveform noise = make_noise(clean.num_samples(), rng);

  SUBCASE("achieved SNR within 0.1 dB of the request") {
    for (const double snr : {-5.0, 0.0, 7.5, 20.0}) {
      auto ex = build_enhance_example(clean, noise, snr, 0.0, rng);
      CHECK(std::abs(achieved_snr_db(clean, ex.mixture_wave) - snr) < 0.1);
      CHECK(ex.target.num_frames() ==
            static_cast<int>(ex.cond_frames.rows()));
      CHECK(ex.loss_region.size() ==
            static_cast<size_t>(ex.target.num_frames()));
    }
  }

  SUBCASE("infinite SNR means no noise at all") {
    auto ex = build_enhance_example(
        clean, noise, std::numeric_limits<double>::infinity(), 0.0, rng);
    CHECK((ex.mixture_wave.samples.array() == clean.samples.array()).all());
    CHECK((ex.cond_frames.array() == ex.target.values.array()).all());
  }

  SUBCASE("zero-energy noise with finite SNR is rejected") {
    Waveform silent;
    silent.samples = Vec::Zero(clean.num_samples());
    CHECK_THROWS_AS(build_enhance_example(clean, silent, 5.0, 0.0, rng),
                    std::invalid_argument);
  }

  SUBCASE("condition drop frequency tracks drop_prob") {
    int dropped = 0;
    const int draws = 10000;
    Rng coin(99);
    // The coin is the only randomness; reuse one tiny clean/noise pair.
    for (int i = 0; i < draws; ++i)
      if (build_enhance_example(clean, noise, 10.0, 0.3, coin).cond_dropped)
        ++dropped;
    const double freq = static_cast<double>(dropped) / draws;
    CHECK(freq > 0.28);
    CHECK(freq < 0.32);
  }
}

TEST_CASE("separation example construction") {
  auto cfg = small_corpus_config();
  cfg.n_utterances = 3;
  cfg.duration_lo_s = 0.4;
  cfg.duration_hi_s = 0.5;
  Rng rng(7);
  auto corpus = make_synth_speech(cfg, rng);

  SUBCASE("two sources: target is 2x the condition base with tiled halves") {
    auto ex = build_separation_example(
        {corpus[0].wave, corpus[1].wave}, nullptr, rng);
    const int frames = ex.target.num_frames() / 2;
    CHECK(ex.target.num_frames() == 2 * frames);
    CHECK(ex.cond_frames.rows() == 2 * frames);
    CHECK((ex.cond_frames.topRows(frames).array() ==
           ex.cond_frames.bottomRows(frames).array())
              .all());
  }

  SUBCASE("mixture is the exact sample-wise sum") {
    const Waveform noise = make_noise(corpus[0].wave.num_samples(), rng);
    auto ex = build_separation_example(
        {corpus[0].wave, corpus[1].wave, corpus[2].wave}, &noise, rng);
    Vec expected = noise.samples.head(ex.mixture_wave.num_samples());
    for (const auto& s : ex.ref_sources) expected += s.samples;
    CHECK((ex.mixture_wave.samples - expected).cwiseAbs().maxCoeff() == 0.0f);
  }

  SUBCASE("a silent second source degenerates to identity") {
    Waveform silent;
    silent.samples = Vec::Zero(corpus[0].wave.num_samples());
    auto ex =
        build_separation_example({corpus[0].wave, silent}, nullptr, rng);
    const int frames = ex.target.num_frames() / 2;
    CHECK((ex.mixture_wave.samples.array() ==
           corpus[0].wave.samples.head(ex.mixture_wave.num_samples()).array())
              .all());
    // The active source sorts first; its target chunk equals the condition.
    CHECK((ex.target.values.topRows(frames).array() ==
           ex.cond_frames.topRows(frames).array())
              .all());
  }

  SUBCASE("K outside {2, 3} rejected") {
    CHECK_THROWS_AS(build_separation_example({corpus[0].wave}, nullptr, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        build_separation_example(
            {corpus[0].wave, corpus[0].wave, corpus[0].wave, corpus[0].wave},
            nullptr, rng),
        std::invalid_argument);
  }
}

TEST_CASE("synthesis example construction") {
  auto cfg = small_corpus_config();
  cfg.n_utterances = 1;
  cfg.duration_lo_s = 4.0;  // long enough for a 3 s prefix
  cfg.duration_hi_s = 4.0;
  Rng rng(9);
  const auto corpus = make_synth_speech(cfg, rng);
  const auto& utt = corpus[0];
  const int frames = alignment_frames(utt.wave);

  SUBCASE("fully masked audio leaves pure symbol conditioning") {
    auto ex = build_synth_example_with_plan(utt, full_mask_plan(frames));
    CHECK(ex.cond_frames.cwiseAbs().maxCoeff() == 0.0f);
    CHECK(static_cast<int>(ex.symbol_ids.size()) == frames);
    CHECK(static_cast<int>(ex.loss_region.size()) == frames);
  }

  SUBCASE("empty mask leaves nothing to learn and the loss rejects it") {
    auto ex = build_synth_example_with_plan(utt, empty_mask_plan(frames));
    CHECK((ex.cond_frames.array() == ex.target.values.array()).all());
    CHECK_THROWS_AS(
        cfm_finetune_loss(ex.target.values, ex.target.values, ex.loss_region),
        std::invalid_argument);
  }

  SUBCASE("three-second prefix gives the continuation geometry") {
    const int visible = 300;  // 3 s at 100 Hz
    REQUIRE(frames > visible);
    const auto plan = continuation_plan(frames, visible);
    auto ex = build_synth_example_with_plan(utt, plan);
    for (int f = 0; f < frames; ++f) {
      const bool masked = f >= visible;
      CHECK(ex.plan.frame_mask[static_cast<size_t>(f)] == masked);
      if (!masked)
        CHECK((ex.cond_frames.row(f).array() ==
               ex.target.values.row(f).array())
                  .all());
      else
        CHECK(ex.cond_frames.row(f).cwiseAbs().maxCoeff() == 0.0f);
    }
  }

  SUBCASE("random policy plans keep runs and produce symbols") {
    MaskPolicy policy;
    auto ex = build_synth_example(utt, policy, rng);
    CHECK(!ex.plan.fully_masked);  // infilling never drops the audio entirely
    CHECK(ex.loss_region == ex.plan.frame_mask);
  }

  SUBCASE("misaligned symbols are rejected") {
    SynthUtterance broken = utt;
    broken.alignment.back().end_frame -= 1;
    CHECK_THROWS_AS(build_synth_example_with_plan(broken, full_mask_plan(frames)),
                    std::invalid_argument);
  }
}

TEST_CASE("multitask mixer") {
  auto cfg = small_corpus_config();
  cfg.n_utterances = 4;
  Rng rng(11);
  const auto corpus = make_synth_speech(cfg, rng);
  const Waveform noise = make_noise(corpus[0].wave.num_samples(), rng);

  auto make_dataset = [&](int n) {
    std::vector<PairedExample> ds;
    for (int i = 0; i < n; ++i)
      ds.push_back(build_enhance_example(
          corpus[static_cast<size_t>(i % corpus.size())].wave, noise, 10.0,
          0.0, rng));
    return ds;
  };

  SUBCASE("draw frequencies follow factor x size") {
    std::vector<std::vector<PairedExample>> datasets = {
        make_dataset(3), make_dataset(3), make_dataset(3)};
    MultitaskMixer mixer(std::move(datasets), {10, 4, 1}, 42);
    Rng probe(42);
    std::map<int, int> counts;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) ++counts[mixer.peek_dataset(probe)];
    const double total = 15.0;
    CHECK(std::abs(counts[0] / 10000.0 - 10.0 / total) < 0.02);
    CHECK(std::abs(counts[1] / 10000.0 - 4.0 / total) < 0.02);
    CHECK(std::abs(counts[2] / 10000.0 - 1.0 / total) < 0.02);
  }

  SUBCASE("stream prefix is seed deterministic") {
    auto datasets_a = std::vector<std::vector<PairedExample>>{make_dataset(4)};
    auto datasets_b = datasets_a;
    MultitaskMixer a(std::move(datasets_a), {1}, 7);
    MultitaskMixer b(std::move(datasets_b), {1}, 7);
    for (int i = 0; i < 20; ++i) {
      const auto& ea = a.next();
      const auto& eb = b.next();
      CHECK((ea.target.values.array() == eb.target.values.array()).all());
    }
  }

  SUBCASE("empty dataset rejected") {
    std::vector<std::vector<PairedExample>> datasets = {make_dataset(2), {}};
    CHECK_THROWS_AS(MultitaskMixer(std::move(datasets), {1, 1}, 1),
                    ConfigError);
  }
}

TEST_CASE("corpus files round trip") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "flowmel_tasks_test";
  auto cfg = small_corpus_config();
  cfg.n_utterances = 3;
  Rng rng(13);
  const auto corpus = make_synth_speech(cfg, rng);
  write_corpus(dir.string(), corpus);
  const auto loaded = read_corpus(dir.string());
  REQUIRE(loaded.size() == corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    CHECK(loaded[i].speaker == corpus[i].speaker);
    REQUIRE(loaded[i].alignment.size() == corpus[i].alignment.size());
    for (size_t s = 0; s < corpus[i].alignment.size(); ++s) {
      CHECK(loaded[i].alignment[s].symbol == corpus[i].alignment[s].symbol);
      CHECK(loaded[i].alignment[s].start_frame ==
            corpus[i].alignment[s].start_frame);
      CHECK(loaded[i].alignment[s].end_frame ==
            corpus[i].alignment[s].end_frame);
    }
    CHECK((loaded[i].wave.samples - corpus[i].wave.samples)
              .cwiseAbs()
              .maxCoeff() < 1.0f / 32000.0f);
  }
  fs::remove_all(dir);
}
