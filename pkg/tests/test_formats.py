import numpy as np
import pytest
import scipy.sparse as sp

from enif_lab import formats
from enif_lab.graph import chain_graph, lattice_graph
from enif_lab.simulators import Ensemble, ar1_oracle, ar1_sample
from enif_lab.transport import fit_affine_kr, unwrap_precision


class TestMatrixFormats:
    def test_spd_roundtrip(self, tmp_path):
        oracle = ar1_oracle(6, 0.4)
        path = tmp_path / "prec.txt"
        formats.write_spd(oracle.prec, path)
        back = formats.read_spd(path)
        assert np.allclose(back.to_dense(), oracle.prec.to_dense())
        header = path.read_text().splitlines()[0].split()
        assert header == ["6", str(oracle.prec.nnz_lower)]

    def test_rect_roundtrip(self, tmp_path, rng):
        h = sp.random(4, 9, density=0.3, random_state=7, format="csr")
        path = tmp_path / "h.txt"
        formats.write_rect(h, path)
        back = formats.read_rect(path)
        assert (back != h).nnz == 0
        assert path.read_text().split()[0:2] == ["4", "9"]


class TestGraphFormat:
    def test_roundtrip(self, tmp_path):
        g = lattice_graph(4, 5, "8-connected")
        path = tmp_path / "graph.txt"
        formats.write_graph(g, path)
        assert formats.read_graph(path).edges == g.edges


class TestEnsembleFormats:
    def test_csv_roundtrip(self, tmp_path, rng):
        ens = Ensemble(rng.standard_normal((7, 3)))
        path = tmp_path / "ens.csv"
        formats.write_ensemble(ens, path)
        back = formats.read_ensemble(path)
        assert np.allclose(back.data, ens.data)

    def test_binary_roundtrip_exact(self, tmp_path, rng):
        ens = Ensemble(rng.standard_normal((5, 11)))
        path = tmp_path / "ens.bin"
        formats.write_ensemble(ens, path)
        back = formats.read_ensemble(path)
        assert np.array_equal(back.data, ens.data)

    def test_binary_magic_checked(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTMAGIC" + b"\0" * 32)
        with pytest.raises(ValueError):
            formats.read_ensemble_binary(path)

    def test_extension_dispatch(self, tmp_path, rng):
        ens = Ensemble(rng.standard_normal((3, 2)))
        formats.write_ensemble(ens, tmp_path / "a.bin")
        assert (tmp_path / "a.bin").read_bytes()[:8] == formats.ENSEMBLE_MAGIC


class TestKrMapFormat:
    def test_roundtrip_preserves_precision(self, tmp_path):
        oracle = ar1_oracle(9, 0.6)
        ens = ar1_sample(oracle, 300, 5)
        krmap = fit_affine_kr(ens, chain_graph(9))
        path = tmp_path / "map.txt"
        formats.write_krmap(krmap, path)
        back = formats.read_krmap(path, source_graph=chain_graph(9))
        assert np.allclose(back.mean, krmap.mean)
        assert np.array_equal(back.perm.order, krmap.perm.order)
        assert np.allclose(unwrap_precision(back).to_dense(),
                           unwrap_precision(krmap).to_dense())
