import pytest
import torch

from bsunet.blocks import count_parameters
from bsunet.errors import ConfigurationError, ShapeError
from bsunet.networks import (
    BlockEntry, NetworkSpec, OriginalUNetSpec, build_base_unet, build_encoding_unet, build_network,
    build_original_unet, desk_spec, dumps_spec, forward_with_bottleneck, load_spec, loads_spec,
    make_base_spec, parameter_table, resolve_spec,
)

BASE_TARGET = 6_588_139
ORIGINAL_TARGET = 9_854_434


def test_base_count_hits_target():
    assert count_parameters(build_base_unet(resolve_spec("base"))) == BASE_TARGET


def test_original_count_hits_target():
    assert count_parameters(build_original_unet()) == ORIGINAL_TARGET
    assert count_parameters(build_network(resolve_spec("original"))) == ORIGINAL_TARGET


def test_base_smaller_than_original():
    assert count_parameters(build_base_unet(make_base_spec())) < ORIGINAL_TARGET


def test_shipped_files_match_builders():
    assert resolve_spec("base") == make_base_spec()
    assert resolve_spec("desk") == desk_spec()


def test_six_inception_blocks_and_one_dense():
    spec = make_base_spec()
    kinds = [e.kind for e in spec.blocks]
    assert kinds.count("trans") + kinds.count("down") == 6
    assert kinds.count("dense") == 1
    assert spec.blocks[1].to_line() == "down a=8 p=118 b=16"


def test_chain_error_names_block():
    spec = desk_spec()
    blocks = list(spec.blocks)
    blocks[3] = BlockEntry("down", 9, p=8, b=16)
    with pytest.raises(ConfigurationError, match="block 3"):
        NetworkSpec(blocks, name="broken").validate()


def test_wrong_inception_count():
    with pytest.raises(ConfigurationError, match="inception"):
        make_base_spec(widths=(4, 8, 16, 32, 64))


def test_bad_block_order_and_tokens():
    spec = desk_spec()
    with pytest.raises(ConfigurationError):
        NetworkSpec(spec.blocks[::-1]).validate()
    with pytest.raises(ConfigurationError):
        BlockEntry.from_line("down a=4 q=2 b=8")
    with pytest.raises(ConfigurationError):
        BlockEntry("down", 4, b=8)


@pytest.mark.parametrize("ic", [1, 3])
def test_desk_output_shape_and_range(ic):
    net = build_base_unet(desk_spec(ic)).eval()
    x = torch.randn(2, ic, 64, 64) * 3
    with torch.no_grad():
        y = net(x)
    assert y.shape == (2, 1, 64, 64)
    assert y.min() >= 0 and y.max() <= 1


@pytest.mark.parametrize("size", [224, 256, 512])
def test_shape_contract_full_sizes(size):
    net = build_base_unet(desk_spec()).eval()
    with torch.no_grad():
        assert net(torch.rand(1, 1, size, size)).shape == (1, 1, size, size)


def test_base_unet_512_and_code_length():
    spec = make_base_spec()
    net = build_base_unet(spec).eval()
    with torch.no_grad():
        y, code = forward_with_bottleneck(net, torch.rand(1, 1, 512, 512))
    assert y.shape == (1, 1, 512, 512)
    assert code.shape == (1, 256 * (512 // 32) ** 2) == (1, spec.code_length(512))


def test_invalid_size_rejected():
    net = build_base_unet(desk_spec())
    with pytest.raises(ShapeError):
        net(torch.rand(1, 1, 48, 48))
    with pytest.raises(ShapeError):
        net(torch.rand(1, 3, 64, 64))


@pytest.mark.parametrize("make", [lambda: desk_spec(1), lambda: desk_spec(3), make_base_spec])
def test_code_length_equal_with_and_without_skips(make):
    spec = make()
    seg = build_base_unet(spec).eval()
    enc = build_encoding_unet(spec).eval()
    size = 64
    with torch.no_grad():
        _, t2 = seg.forward_with_bottleneck(torch.rand(1, spec.in_channels, size, size))
        rec, t1 = enc.forward_with_bottleneck(torch.rand(1, 1, size, size))
    assert t1.shape == t2.shape
    assert rec.shape == (1, 1, size, size)


def test_encoding_spec_drops_skip_channels():
    spec = desk_spec()
    enc = spec.without_skips()
    assert not enc.skip_connections and enc.in_channels == 1
    prev = None
    for e in enc.blocks:
        if e.kind == "up":
            assert e.a == prev
        prev = e.out_channels
    assert enc.head_in_channels() == enc.decoder[-1].out_channels


def test_code_is_deterministic_in_eval():
    net = build_base_unet(desk_spec()).eval()
    x = torch.rand(1, 1, 64, 64)
    with torch.no_grad():
        assert torch.equal(net.forward_with_bottleneck(x)[1], net.forward_with_bottleneck(x)[1])


def test_single_pass_returns_dense_output():
    net = build_base_unet(desk_spec()).eval()
    calls = []
    net.dense.register_forward_hook(lambda m, i, o: calls.append(o.detach().clone()) or None)
    with torch.no_grad():
        _, code = net.forward_with_bottleneck(torch.rand(1, 1, 64, 64))
    assert len(calls) == 1
    assert torch.equal(code, calls[0].flatten(1))


def test_every_parameter_receives_an_update():
    torch.manual_seed(3)
    net = build_base_unet(desk_spec())
    x = torch.rand(2, 1, 64, 64)
    t = (torch.rand(2, 1, 64, 64) > 0.5).float()
    before = {n: p.detach().clone() for n, p in net.named_parameters()}
    opt = torch.optim.SGD(net.parameters(), lr=0.1)
    loss = ((net(x) - t) ** 2).mean()
    loss.backward()
    grads = {n: p.grad.abs().sum().item() for n, p in net.named_parameters()}
    opt.step()
    for n, p in net.named_parameters():
        if grads[n] > 0:
            assert not torch.equal(before[n], p), n
    assert sum(g > 0 for g in grads.values()) == len(grads)


def test_original_unet_shape():
    net = build_original_unet(OriginalUNetSpec(base_width=4)).eval()
    with torch.no_grad():
        y = net(torch.rand(1, 1, 64, 64))
    assert y.shape == (1, 1, 64, 64)


def test_original_unet_512():
    net = build_original_unet().eval()
    with torch.no_grad():
        assert net(torch.rand(1, 1, 512, 512)).shape == (1, 1, 512, 512)


def test_original_spec_validation():
    with pytest.raises(ConfigurationError):
        OriginalUNetSpec(up_kernel=3).validate()


def test_spec_roundtrip(tmp_path):
    for spec in (make_base_spec(), desk_spec(3), desk_spec().without_skips(), OriginalUNetSpec()):
        assert loads_spec(dumps_spec(spec, header="note")) == spec
    p = tmp_path / "x.ini"
    p.write_text(dumps_spec(desk_spec()))
    assert load_spec(p) == desk_spec()


def test_malformed_spec_files(tmp_path):
    with pytest.raises(ConfigurationError):
        loads_spec("[other]\nx = 1\n")
    with pytest.raises(ConfigurationError):
        loads_spec("[network]\nkind = base\n")
    with pytest.raises(ConfigurationError):
        loads_spec("[network]\nkind = strange\nblocks = x\n")
    with pytest.raises(ConfigurationError):
        load_spec(tmp_path / "missing.ini")


def test_parameter_table_sums_to_total():
    net = build_base_unet(make_base_spec())
    rows = parameter_table(net)
    assert sum(n for _, n in rows) == BASE_TARGET
    assert rows[0][0] == "stem" and any(name.startswith("downs.") for name, _ in rows)


def test_three_channel_base_is_larger():
    n1 = count_parameters(build_base_unet(make_base_spec(1)))
    n3 = count_parameters(build_base_unet(make_base_spec(3)))
    # four 1x1 stem convs, each gaining 2 input channels x 8 outputs
    assert n3 - n1 == 4 * 2 * 8
