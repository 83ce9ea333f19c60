import numpy as np

from b2v.baseline import (
    bow_eval,
    bow_featurize,
    bow_train,
    bow_vocab,
    program_lines,
    run_bow_experiment,
)
from b2v.train import TrainConfig, read_manifest, split

from _synth import synth_corpus, synth_program


class TestBowFeatures:
    def test_token_is_one_rendered_line(self):
        program = synth_program("p", "alpha", seed=0)
        lines = program_lines(program)
        vocab = bow_vocab([program], min_count=1)
        assert set(vocab.tokens) <= set(lines)

    def test_all_oov_gives_zero_vector(self):
        from b2v.ir import BasicBlock, Opaque
        from b2v.lifter import Cfg, Program

        a = synth_program("a", "alpha", seed=0)
        vocab = bow_vocab([a], min_count=1)
        cfg = Cfg()
        cfg.blocks[0] = BasicBlock(addr=0, stmts=[Opaque("neverlifted")])
        oov = Program(binary_id="oov", arch="x86_64", cfg=cfg)
        vec = bow_featurize(oov, vocab)
        assert vec.shape == (vocab.size,)
        assert not vec.any()

    def test_duplicate_line_counts_twice(self):
        program = synth_program("p", "alpha", seed=1)
        block = next(iter(program.cfg.blocks.values()))
        block.stmts.append(block.stmts[0])
        vocab = bow_vocab([program], min_count=1)
        vec = bow_featurize(program, vocab)
        from b2v.ir import render
        col = vocab.index[render(block.stmts[0])]
        assert vec[col] >= 2

    def test_deterministic(self):
        program = synth_program("p", "alpha", seed=2)
        vocab = bow_vocab([program], min_count=1)
        assert np.array_equal(bow_featurize(program, vocab),
                              bow_featurize(program, vocab))

    def test_order_invariant_over_multiset(self):
        a = synth_program("p", "alpha", seed=3)
        b = synth_program("p", "alpha", seed=3)
        first = next(iter(b.cfg.blocks.values()))
        first.stmts = list(reversed(first.stmts))
        vocab = bow_vocab([a], min_count=1)
        assert np.array_equal(bow_featurize(a, vocab), bow_featurize(b, vocab))

    def test_frequency_threshold_monotone(self):
        programs = [synth_program(f"p{i}", "alpha", seed=i) for i in range(4)]
        low = bow_vocab(programs, min_count=1)
        high = bow_vocab(programs, min_count=10 ** 6)
        mid = bow_vocab(programs, min_count=3)
        assert low.size > mid.size > high.size == 0
        assert set(mid.tokens) <= set(low.tokens)


class TestClassifier:
    def test_learns_separable_count_profiles(self):
        # count-style features, the shape bag-of-words actually produces
        rng = np.random.default_rng(0)
        x0 = np.hstack([rng.poisson(6.0, size=(30, 3)), rng.poisson(0.3, size=(30, 3))])
        x1 = np.hstack([rng.poisson(0.3, size=(30, 3)), rng.poisson(6.0, size=(30, 3))])
        x = np.vstack([x0, x1]).astype(float)
        y = np.array([0] * 30 + [1] * 30)
        clf = bow_train(x, y, x, y, num_classes=2)
        assert bow_eval(clf, x, y) == 1.0

    def test_deterministic_training(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(40, 6))
        y = rng.integers(0, 3, size=40)
        a = bow_train(x, y, x, y, num_classes=3)
        b = bow_train(x, y, x, y, num_classes=3)
        assert np.array_equal(a.w, b.w) and a.l2 == b.l2


class TestExperiment:
    def test_same_splits_as_graph_pipeline(self, tmp_path):
        manifest = read_manifest(synth_corpus(tmp_path, per_class=10))
        idx = list(range(len(manifest.entries)))
        assert split(idx, 7) == split(idx, 7)  # shared split function, same seed

    def test_bow_experiment_on_separable_corpus(self, tmp_path):
        manifest = read_manifest(synth_corpus(tmp_path, per_class=12))
        config = TrainConfig(runs=2, seed=0, min_count=1)
        report = run_bow_experiment(manifest, config)
        assert report["task"] == "multiclass"
        assert len(report["result"]["accuracies"]) == 2
        assert report["result"]["mean_accuracy"] >= 0.9
        assert "kernel SVM" in report["note"]
