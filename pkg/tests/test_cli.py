import io
import json
import os
import shutil
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout

import numpy as np

from cli.commands import build_parser, main
from core.graph import ModelGraph
from harness.synthetic import gen_desk_model
from storage.container import load_model, save_model
from storage.packing import array_to_tensor
from tests.fixtures import linear


class TestCommandLine(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.model = self._path('model.safetensors')
        desk = gen_desk_model('mlp', seed=0, samples=0)
        save_model(desk.graph, desk.tensors, self.model)

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def _path(self, name):
        return os.path.join(self.tmpdir, name)

    def _run(self, *argv):
        out, err = io.StringIO(), io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            code = main(list(argv))
        return code, out.getvalue(), err.getvalue()

    def _json(self, *argv, expect=0):
        code, out, err = self._run(*argv)
        self.assertEqual(code, expect, err)
        return json.loads(out)

    def test_split_quantize_verify(self):
        split = self._path('split.safetensors')
        quantized = self._path('split_int4.safetensors')

        doc = self._json('split', '--model', self.model, '--out', split)
        self.assertEqual(doc['layers_split'], 2)
        self.assertEqual(doc['message'], '2 layers split')
        self.assertEqual(len(doc['layers']), 2)

        doc = self._json('quantize', '--model', split, '--bits', '4', '--out', quantized)
        self.assertEqual(doc['tensors_quantized'], 12)
        self.assertAlmostEqual(doc['size_ratio'], 0.125, places=3)

        doc = self._json('verify', '--a', self.model, '--b', split, '--random', '32')
        self.assertTrue(doc['passed'])
        self.assertTrue(doc['reconstruction_exact'])
        self.assertEqual(doc['inputs'], 32)
        self.assertEqual(doc['agreement'], 1.0)

        graph, tensors = load_model(quantized)
        self.assertEqual(len(graph.layers), 3)
        self.assertTrue(all(t.dtype.is_quantized for t in tensors.values()))

    def test_inputs_are_not_modified(self):
        with open(self.model, 'rb') as f:
            before = f.read()
        self._json('split', '--model', self.model, '--out', self._path('split.safetensors'))
        self._json('quantize', '--model', self.model, '--bits', '8', '--out', self._path('q.safetensors'))
        with open(self.model, 'rb') as f:
            self.assertEqual(f.read(), before)

    def test_verify_quantized_fails(self):
        quantized = self._path('int2.safetensors')
        self._json('quantize', '--model', self.model, '--bits', '2', '--out', quantized)
        doc = self._json('verify', '--a', self.model, '--b', quantized, '--random', '16', expect=1)
        self.assertFalse(doc['passed'])
        self.assertFalse(doc['reconstruction_exact'])

    def test_verify_with_input_file(self):
        split = self._path('split.safetensors')
        inputs = self._path('inputs.safetensors')
        self._json('split', '--model', self.model, '--out', split)
        batch = np.random.default_rng(0).normal(size=(10, 16)).astype(np.float32)
        save_model(ModelGraph(), {'inputs': array_to_tensor('inputs', batch)}, inputs)
        doc = self._json('verify', '--a', self.model, '--b', split, '--inputs', inputs)
        self.assertEqual(doc['inputs'], 10)
        self.assertTrue(doc['passed'])

    def test_small_layers_not_split(self):
        layer, tensors = linear('tiny', [[1.0, 2.0, 3.0]])
        tiny = self._path('tiny.safetensors')
        save_model(ModelGraph(layers=[layer], input_shape=(3,)), tensors, tiny)
        doc = self._json('split', '--model', tiny, '--out', self._path('tiny_split.safetensors'))
        self.assertEqual(doc['message'], '0 layers split')

    def test_stats(self):
        quantized = self._path('q.safetensors')
        self._json('quantize', '--model', self.model, '--bits', '4', '--out', quantized)
        doc = self._json('stats', '--model', quantized, '--reference', self.model)
        self.assertEqual(doc['tensors'], 4)
        self.assertEqual([s['bits'] for s in doc['tensor_stats']], [4] * 4)
        self.assertTrue(all(s['mse'] >= 0 for s in doc['tensor_stats']))
        self.assertGreater(doc['tensor_stats'][0]['mse'], 0)

        code, out, _ = self._run('stats', '--model', self.model, '--format', 'text')
        self.assertEqual(code, 0)
        lines = out.splitlines()
        self.assertEqual(lines[0], '# summary')
        self.assertIn('tensors:4', lines)

    def test_eval(self):
        doc = self._json('eval', '--kind', 'mlp', '--bits', '8', '4', '--samples', '64', '--threads', '2')
        self.assertEqual([row['bits'] for row in doc['rows']], [8, 4])
        self.assertEqual(doc['samples'], 64)
        self.assertEqual(doc['fp_accuracy'], 1.0)
        self.assertEqual(doc['layers_split'], 2)

        doc = self._json('eval', '--dims', '16', '32', '32', '4', '--bits', '4', '--samples', '32')
        self.assertEqual(doc['layers_split'], 3)
        self.assertEqual(doc['dims'], [16, 32, 32, 4])

    def test_bench(self):
        doc = self._json('bench', '--params', '5000')
        self.assertGreater(doc['params'], 0)
        self.assertEqual(doc['bits'], 4)
        doc = self._json('bench', '--model', self.model, '--bits', '8')
        self.assertEqual(doc['layers_split'], 2)

    def test_error_exit_codes(self):
        code, out, err = self._run('quantize', '--model', self.model, '--bits', '3',
                                   '--out', self._path('bad.safetensors'))
        self.assertEqual((code, out), (1, ''))
        self.assertIn('error:', err)
        self.assertFalse(os.path.exists(self._path('bad.safetensors')))

        code, _, err = self._run('split', '--model', self._path('missing.safetensors'),
                                 '--out', self._path('out.safetensors'))
        self.assertEqual(code, 2)
        self.assertIn('missing.safetensors', err)

        code, out, err = self._run('verify', '--a', self.model, '--b', self.model, '--random', '-1')
        self.assertEqual((code, out), (1, ''))
        self.assertIn('Input count must be >= 0', err)

        self.assertEqual(self._run('split', '--model', self.model, '--bogus')[0], 1)
        self.assertEqual(self._run('frobnicate')[0], 1)

    def test_environment_threads(self):
        os.environ['SPLITQUANT_THREADS'] = 'zero'
        try:
            code, _, err = self._run('split', '--model', self.model, '--out', self._path('s.safetensors'))
        finally:
            del os.environ['SPLITQUANT_THREADS']
        self.assertEqual(code, 1)
        self.assertIn('SPLITQUANT_THREADS', err)

    def test_parser(self):
        args = build_parser().parse_args(['verify', '--a', 'x', '--b', 'y', '--random', '4', '--tol', '1e-3'])
        self.assertEqual((args.command, args.random, args.tol), ('verify', 4, 1e-3))

if __name__ == '__main__':
    unittest.main()
