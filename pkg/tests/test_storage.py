import json
import os
import tempfile
import unittest

import numpy as np

from core.data_types import DType, LayerKind
from core.exceptions import (
    ArgumentError,
    ContainerIOError,
    CorruptionError,
    FormatError,
    ValidationError
)
from core.graph import LayerSpec, ModelGraph
from storage.container import GRAPH_KEY, encode_model, load_model, save_model
from storage.packing import (
    array_to_tensor,
    pack_int2,
    pack_int4,
    tensor_to_array,
    unpack_int2,
    unpack_int4
)
from storage.validation import infer_shapes, validate
from tests.fixtures import linear, random_mlp


def _raw_container(header, payload=b''):
    raw = json.dumps(header).encode('utf-8')
    return len(raw).to_bytes(8, 'little') + raw + payload


class TestPacking(unittest.TestCase):
    def test_int4_every_byte(self):
        for byte in range(256):
            values = unpack_int4(bytes([byte]), 2)
            self.assertTrue(np.all((values >= -8) & (values <= 7)))
            self.assertEqual(pack_int4(values), bytes([byte]))

    def test_int2_every_byte(self):
        for byte in range(256):
            values = unpack_int2(bytes([byte]), 4)
            self.assertTrue(np.all((values >= -2) & (values <= 1)))
            self.assertEqual(pack_int2(values), bytes([byte]))

    def test_nibble_order(self):
        # element 0 in the low nibble, two's complement
        self.assertEqual(pack_int4(np.array([1, -1], dtype=np.int8)), bytes([0xF1]))
        self.assertEqual(pack_int2(np.array([1, -2, 0, -1], dtype=np.int8)), bytes([0b11001001]))

    def test_odd_count_pads_with_zero(self):
        data = pack_int4(np.arange(1, 8, dtype=np.int8))
        self.assertEqual(len(data), 4)
        self.assertEqual(data[-1] >> 4, 0)
        np.testing.assert_array_equal(unpack_int4(data, 7), np.arange(1, 8))

    def test_out_of_range(self):
        with self.assertRaises(ArgumentError):
            pack_int4(np.array([8]))
        with self.assertRaises(ArgumentError):
            pack_int2(np.array([-3]))

    def test_tensor_conversion(self):
        values = np.array([[-8, 7, 0], [1, -1, 3]], dtype=np.int8)
        tensor = array_to_tensor('q', values, DType.I4X2)
        self.assertEqual(len(tensor.data), 3)
        np.testing.assert_array_equal(tensor_to_array(tensor), values)

    def test_f32_is_little_endian(self):
        tensor = array_to_tensor('w', np.array([1.0], dtype=np.float32))
        self.assertEqual(tensor.data, b'\x00\x00\x80\x3f')


class TestContainer(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.dir = self._tmp.name

    def tearDown(self):
        self._tmp.cleanup()

    def _path(self, name):
        return os.path.join(self.dir, name)

    def test_minimal_tensor(self):
        tensors = {'w': array_to_tensor('w', np.arange(4, dtype=np.float32).reshape(2, 2))}
        save_model(ModelGraph(), tensors, self._path('m.st'))
        graph, loaded = load_model(self._path('m.st'))
        self.assertEqual(loaded['w'].shape, (2, 2))
        self.assertEqual(len(loaded['w'].data), 16)
        self.assertEqual(graph.layers, [])

    def test_empty_model(self):
        blob = encode_model(ModelGraph(), {})
        self.assertEqual(len(blob) % 8, 0)
        save_model(ModelGraph(), {}, self._path('empty.st'))
        graph, tensors = load_model(self._path('empty.st'))
        self.assertEqual((graph.layers, tensors), ([], {}))

    def test_round_trip(self):
        graph, tensors = random_mlp([8, 16, 16, 12, 8, 4], seed=3)
        graph.metadata['origin'] = 'unit test'
        path = self._path('mlp.st')
        save_model(graph, tensors, path)
        loaded_graph, loaded = load_model(path)
        self.assertEqual(loaded_graph.to_dict(), graph.to_dict())
        self.assertEqual(loaded_graph.metadata, {'origin': 'unit test'})
        self.assertEqual(list(loaded), list(tensors))
        for name, tensor in tensors.items():
            self.assertEqual(loaded[name].data, tensor.data)
        self.assertEqual(encode_model(loaded_graph, loaded), encode_model(graph, tensors))

    def test_random_models_resave_identically(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            dims = [int(d) for d in rng.integers(1, 9, size=int(rng.integers(2, 6)))]
            graph, tensors = random_mlp(dims, seed=seed)
            blob = encode_model(graph, tensors)
            path = self._path(f"m{seed}.st")
            with open(path, 'wb') as f:
                f.write(blob)
            self.assertEqual(encode_model(*load_model(path)), blob)

    def test_packed_payload_bytes(self):
        tensors = {'q': array_to_tensor('q', np.arange(1, 8, dtype=np.int8), DType.I4X2)}
        path = self._path('packed.st')
        save_model(ModelGraph(), tensors, path)
        with open(path, 'rb') as f:
            blob = f.read()
        self.assertEqual(blob[-4:], bytes([0x21, 0x43, 0x65, 0x07]))
        _, loaded = load_model(path)
        np.testing.assert_array_equal(tensor_to_array(loaded['q']), np.arange(1, 8))

    def test_dangling_reference(self):
        graph = {'input_shape': [3], 'layers': [{'kind': 'linear', 'name': 'l', 'weight_name': 'w1'}]}
        header = {'__metadata__': {GRAPH_KEY: json.dumps(graph)}}
        with open(self._path('bad.st'), 'wb') as f:
            f.write(_raw_container(header))
        with self.assertRaises(ValidationError) as ctx:
            load_model(self._path('bad.st'))
        self.assertIn("'w1'", str(ctx.exception))

    def test_invalid_model_not_written(self):
        layer, tensors = linear('l', np.ones((2, 3)))
        graph = ModelGraph(layers=[LayerSpec(kind=LayerKind.SPLIT_SUM, name='s', children=[layer, layer])],
                           input_shape=(3,))
        with self.assertRaises(ValidationError):
            save_model(graph, tensors, self._path('never.st'))
        self.assertFalse(os.path.exists(self._path('never.st')))

    def test_io_errors(self):
        with self.assertRaises(ContainerIOError):
            load_model(self._path('missing.st'))
        with self.assertRaises(ContainerIOError):
            save_model(ModelGraph(), {}, self._path('no/such/dir/m.st'))

    def test_malformed_headers(self):
        cases = {
            'short.st': b'\x01\x02',
            'length.st': (500).to_bytes(8, 'little') + b'{}',
            'json.st': (4).to_bytes(8, 'little') + b'{{{{',
            'dup.st': (17).to_bytes(8, 'little') + b'{"a":"1","a":"2"}',
        }
        for name, blob in cases.items():
            with open(self._path(name), 'wb') as f:
                f.write(blob)
            with self.assertRaises(FormatError):
                load_model(self._path(name))

    def test_bad_offsets(self):
        entry = {'dtype': 'F32', 'shape': [1]}
        cases = {
            'overlap.st': ({'a': dict(entry, data_offsets=[0, 4]), 'b': dict(entry, data_offsets=[2, 6])}, 8),
            'gap.st': ({'a': dict(entry, data_offsets=[4, 8])}, 8),
            'bounds.st': ({'a': dict(entry, data_offsets=[0, 4])}, 2),
        }
        for name, (header, size) in cases.items():
            with open(self._path(name), 'wb') as f:
                f.write(_raw_container(header, bytes(size)))
            with self.assertRaises(CorruptionError):
                load_model(self._path(name))


class TestValidation(unittest.TestCase):
    def test_well_formed_mlp(self):
        self.assertEqual(validate(*random_mlp([4, 8, 2])), [])

    def test_split_sum_arity(self):
        tensors = {}
        children = [linear(f"c{i}", np.ones((2, 3)), tensors=tensors)[0] for i in range(2)]
        graph = ModelGraph(layers=[LayerSpec(kind=LayerKind.SPLIT_SUM, name='s', children=children)],
                           input_shape=(3,))
        problems = validate(graph, tensors)
        self.assertEqual(len(problems), 1)
        self.assertIn('exactly 3 children', problems[0])

    def test_shape_mismatch(self):
        tensors = {}
        first, _ = linear('a', np.ones((5, 3)), tensors=tensors)
        second, _ = linear('b', np.ones((2, 4)), tensors=tensors)
        problems = validate(ModelGraph(layers=[first, second], input_shape=(3,)), tensors)
        self.assertEqual(len(problems), 1)
        self.assertIn("layer 'b'", problems[0])

    def test_quantized_tensor_needs_params(self):
        tensors = {'w': array_to_tensor('w', np.zeros((2, 2), dtype=np.int8), DType.I8)}
        graph = ModelGraph(layers=[LayerSpec(kind=LayerKind.LINEAR, name='l', weight_name='w')],
                           input_shape=(2,))
        self.assertTrue(any('no quantization parameters' in p for p in validate(graph, tensors)))

    def test_infer_shapes(self):
        tensors = {'k': array_to_tensor('k', np.zeros((2, 1, 3, 3), dtype=np.float32))}
        head, _ = linear('head', np.zeros((4, 50)), tensors=tensors, flatten=1)
        conv = LayerSpec(kind=LayerKind.CONV2D, name='conv', weight_name='k', attrs={'padding': 1})
        graph = ModelGraph(layers=[conv, LayerSpec(kind=LayerKind.RELU, name='r'), head],
                           input_shape=(1, 5, 5))
        self.assertEqual(infer_shapes(graph, tensors),
                         [('conv', (2, 5, 5)), ('r', (2, 5, 5)), ('head', (4,))])

    def test_attention_head_dim(self):
        tensors = {}
        children = [linear(f"attn.{p}", np.zeros((4, 4)), tensors=tensors)[0] for p in 'qkvo']
        attention = LayerSpec(kind=LayerKind.SOFTMAX_ATTENTION, name='attn',
                              attrs={'head_dim': 3}, children=children)
        problems = validate(ModelGraph(layers=[attention], input_shape=(5, 4)), tensors)
        self.assertEqual(len(problems), 1)
        self.assertIn('head_dim', problems[0])

if __name__ == '__main__':
    unittest.main()
