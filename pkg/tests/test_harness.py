import unittest

import numpy as np

from core.data_types import LayerKind
from core.exceptions import ArgumentError, DegenerateInputError
from harness.bench import bench, count_params
from harness.experiment import AccuracyTable, accuracy, run_table1_analog
from harness.synthetic import (
    TABLE_MLP_DIMS,
    gen_bench_model,
    gen_desk_model,
    gen_outlier_tensor,
    outlier_count,
    random_inputs
)
from quant.splitter import split_model
from engine.engine import forward_batch, predict
from storage.packing import tensor_to_array
from utils.monitoring import Monitoring


class TestOutlierTensor(unittest.TestCase):
    def test_no_outliers(self):
        values = tensor_to_array(gen_outlier_tensor(10000, outlier_frac=0.0, seed=1))
        self.assertLessEqual(float(np.max(np.abs(values))), 5 * 0.05)

    def test_outlier_count_and_signs(self):
        values = tensor_to_array(gen_outlier_tensor(1000, seed=2))
        outliers = values[np.abs(values) == 1.0]
        self.assertEqual(outlier_count(1000, 0.002), 2)
        # 1000 * 0.007 and 100 * 0.07 are both 7.000000000000001 in floats
        self.assertEqual(outlier_count(1000, 0.007), 7)
        self.assertEqual(outlier_count(100, 0.07), 7)
        self.assertEqual(outlier_count(1001, 0.002), 3)
        self.assertEqual(sorted(outliers.tolist()), [-1.0, 1.0])

    def test_shape_and_name(self):
        tensor = gen_outlier_tensor(12, shape=(3, 4), name='w')
        self.assertEqual((tensor.name, tensor.shape), ('w', (3, 4)))
        with self.assertRaises(ArgumentError):
            gen_outlier_tensor(12, shape=(5, 2))

    def test_seeded(self):
        a = gen_outlier_tensor(500, seed=3)
        self.assertEqual(a.data, gen_outlier_tensor(500, seed=3).data)
        self.assertNotEqual(a.data, gen_outlier_tensor(500, seed=4).data)

    def test_invalid_arguments(self):
        for kwargs in ({'outlier_frac': 0.06}, {'outlier_frac': -0.01}, {'bulk_sigma': -1.0}):
            with self.assertRaises(ArgumentError):
                gen_outlier_tensor(100, **kwargs)
        with self.assertRaises(ArgumentError):
            gen_outlier_tensor(-1)
        self.assertEqual(gen_outlier_tensor(0).shape, (0,))


class TestDeskModel(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.desk = gen_desk_model('mlp', seed=0, samples=512)

    def test_balanced_self_labeled_dataset(self):
        desk = self.desk
        self.assertEqual(desk.inputs.shape, (512, 16))
        self.assertEqual(np.bincount(desk.labels, minlength=4).tolist(), [128] * 4)
        self.assertEqual(accuracy(desk.graph, desk.tensors, desk.inputs, desk.labels), 1.0)

    def test_deterministic(self):
        again = gen_desk_model('mlp', seed=0, samples=512)
        np.testing.assert_array_equal(again.inputs, self.desk.inputs)
        np.testing.assert_array_equal(again.labels, self.desk.labels)
        for name, tensor in self.desk.tensors.items():
            self.assertEqual(again.tensors[name].data, tensor.data)

    def test_layout(self):
        names = [layer.name for layer in self.desk.graph.layers]
        self.assertEqual(names, ['fc1', 'relu1', 'fc2'])
        self.assertEqual(self.desk.graph.metadata['desk.kind'], 'mlp')

    def test_outliers_stay_out_of_head(self):
        fc1 = tensor_to_array(self.desk.tensors['fc1.weight'])
        head = tensor_to_array(self.desk.tensors['fc2.weight'])
        self.assertEqual(sorted(fc1[np.abs(fc1) == 1.0].tolist()), [-1.0, 1.0, 1.0])
        self.assertLess(float(np.max(np.abs(head))), 0.5)

    def test_every_seed_builds(self):
        for kind in ('mlp', 'attn'):
            for seed in range(5):
                desk = gen_desk_model(kind, seed=seed, samples=512)
                self.assertEqual(np.bincount(desk.labels, minlength=4).tolist(), [128] * 4, (kind, seed))
                self.assertEqual(accuracy(desk.graph, desk.tensors, desk.inputs, desk.labels), 1.0,
                                 (kind, seed))

    def test_head_bias_balances_classes(self):
        desk = gen_desk_model('mlp', seed=3, samples=0)
        inputs = random_inputs(desk.graph, desk.tensors, 4096, seed=11)
        shares = np.bincount(predict(forward_batch(desk.graph, desk.tensors, inputs)), minlength=4) / 4096
        np.testing.assert_allclose(shares, 0.25, atol=0.05)

    def test_attention_model(self):
        desk = gen_desk_model('attn', seed=0, samples=0)
        kinds = [layer.kind for layer in desk.graph.layers]
        self.assertEqual(kinds, [LayerKind.EMBEDDING, LayerKind.LAYERNORM, LayerKind.SOFTMAX_ATTENTION,
                                 LayerKind.GELU, LayerKind.LINEAR])
        self.assertEqual([c.name for c in desk.graph.layers[2].children],
                         ['attn.q', 'attn.k', 'attn.v', 'attn.o'])
        self.assertEqual(len(desk.labels), 0)

        inputs = random_inputs(desk.graph, desk.tensors, 10, seed=1)
        self.assertEqual(inputs.shape, (10, 8))
        np.testing.assert_array_equal(inputs, np.floor(inputs))
        self.assertTrue(0 <= inputs.min() and inputs.max() < 32)
        self.assertEqual(forward_batch(desk.graph, desk.tensors, inputs).shape, (10, 8, 4))

    def test_unlabelable_classes(self):
        with self.assertRaises(DegenerateInputError):
            gen_desk_model('mlp', samples=8, bulk_sigma=0.0, outlier_frac=0.0)

    def test_invalid_arguments(self):
        with self.assertRaises(ArgumentError):
            gen_desk_model('cnn')
        with self.assertRaises(ArgumentError):
            gen_desk_model('mlp', dims=(16, 0, 4), samples=0)
        with self.assertRaises(ArgumentError):
            gen_desk_model('mlp', samples=-1)


class TestAccuracyExperiment(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.desk = gen_desk_model('mlp', dims=TABLE_MLP_DIMS, seed=0, samples=512)
        cls.table = run_table1_analog(cls.desk, threads=2)

    def test_rows(self):
        table = self.table
        self.assertEqual([row.bits for row in table.rows], [8, 4, 2])
        self.assertEqual(table.fp_accuracy, 1.0)
        self.assertEqual(table.layers_split, 3)
        self.assertEqual(table.chance, 0.25)
        with self.assertRaises(KeyError):
            table.row(3)

    def test_recovery_pattern(self):
        table = self.table
        fp = table.fp_accuracy
        int8 = table.row(8)
        self.assertGreaterEqual(int8.baseline, fp - 0.02)
        self.assertGreaterEqual(int8.split, fp - 0.02)
        int4 = table.row(4)
        self.assertLessEqual(int4.baseline, fp - 0.05)
        self.assertGreaterEqual(int4.split, fp - 0.02)
        self.assertGreater(int4.split, int4.baseline)
        self.assertAlmostEqual(int4.recovered, int4.split - int4.baseline)
        int2 = table.row(2)
        self.assertLessEqual(int2.baseline, table.chance + 0.10)
        self.assertLessEqual(int2.split, table.chance + 0.10)

    def test_rows_deterministic(self):
        again = run_table1_analog(gen_desk_model('mlp', dims=TABLE_MLP_DIMS, seed=0, samples=512))
        self.assertEqual(again.rows, self.table.rows)

    def test_size_ratios(self):
        for bits, expected in ((8, 0.25), (4, 0.125), (2, 0.0625)):
            row = self.table.row(bits)
            self.assertAlmostEqual(row.baseline_size_ratio, expected)
            self.assertAlmostEqual(row.split_size_ratio, 3 * expected)

    def test_single_thread_matches(self):
        table = run_table1_analog(self.desk, bits=(4,))
        self.assertEqual(table.rows, [self.table.row(4)])

    def test_to_dict(self):
        doc = self.table.to_dict()
        self.assertEqual(doc['samples'], 512)
        self.assertEqual(len(doc['rows']), 3)
        self.assertIn('recovered', doc['rows'][0])

    def test_invalid_bits(self):
        with self.assertRaises(ArgumentError):
            run_table1_analog(self.desk, bits=(3,))

    def test_empty_table(self):
        self.assertEqual(AccuracyTable('mlp', 0, 0, 0.0, 0).chance, 0.0)


class TestBench(unittest.TestCase):
    def test_monitoring_phases(self):
        monitor = Monitoring(sample_interval=0.01)
        with monitor.phase('a'):
            np.ones((256, 256)).sum()
        with monitor.phase('b'):
            pass
        stats = monitor.get_stats()
        self.assertEqual(list(stats.phases), ['a', 'b'])
        self.assertGreater(stats.peak_rss_mb, 0.0)
        self.assertAlmostEqual(stats.total_seconds, stats.phases['a'].seconds + stats.phases['b'].seconds)

    def test_model_size(self):
        graph, tensors = gen_bench_model(100_000)
        params = count_params(graph, tensors)
        self.assertLess(abs(params - 100_000), 20_000)
        self.assertEqual(gen_bench_model(100_000)[1]['layer0.weight'].data, tensors['layer0.weight'].data)

    def test_empty_model(self):
        graph, tensors = gen_bench_model(0)
        report = bench(graph, tensors)
        self.assertEqual((report.params, report.layers_split), (0, 0))
        with self.assertRaises(ArgumentError):
            gen_bench_model(-5)

    def test_small_model(self):
        graph, tensors = gen_bench_model(20_000, seed=1)
        report = bench(graph, tensors, bits=2, threads=2)
        self.assertEqual(report.layers_split, len(split_model(graph, tensors).plans))
        self.assertGreaterEqual(report.split_seconds, 0.0)
        self.assertGreaterEqual(report.quantize_seconds, 0.0)
        self.assertGreater(report.peak_rss_mb, 0.0)
        doc = report.to_dict()
        self.assertEqual(doc['bits'], 2)
        self.assertAlmostEqual(doc['total_seconds'], report.split_seconds + report.quantize_seconds)

    def test_ten_million_params(self):
        graph, tensors = gen_bench_model(10_000_000)
        report = bench(graph, tensors, bits=4)
        self.assertLess(abs(report.params - 10_000_000), 500_000)
        self.assertEqual(report.layers_split, 38)
        self.assertLess(report.total_seconds, 30.0)

    def test_invalid_bits(self):
        graph, tensors = gen_bench_model(0)
        with self.assertRaises(ArgumentError):
            bench(graph, tensors, bits=16)

if __name__ == '__main__':
    unittest.main()
