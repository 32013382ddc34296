#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
DeepKriging - 空间预测工具箱
命令行入口：模拟数据、基函数嵌入、训练与预测、交叉验证、分布预测、探针、NNGP 与实验复现
"""

import logging
import os
import sys
from pathlib import Path

# 确保项目根目录在Python路径中
if __name__ == "__main__":
    project_root = os.path.dirname(os.path.abspath(__file__))
    if project_root not in sys.path:
        sys.path.insert(0, project_root)

import click
import numpy as np
import pandas as pd

from app.basis.basis_embed import KERNELS, build_basis_system, concat_features, embed, save_embedding_csv
from app.covariance.covariance_mle import fit_mle
from app.ddsp.ddsp_density import DEFAULT_LEVELS, density_query, ensemble_density
from app.deepkriging.deepkriging_model import FEATURES, DeepKriging, classify_threshold
from app.deepkriging.deepkriging_probe import PROBE_METHODS, nonlinearity_probe
from app.errors import ConfigError, DeepKrigingError
from app.experiment.experiment_config import check_config, echo_config, parse_config
from app.experiment.experiment_constants import (
    EXIT_CONFIG, EXIT_OK, EXPERIMENTS, METHODS, get_version,
)
from app.experiment.experiment_logging import setup_logger
from app.experiment.experiment_results import emit_plot_data, write_summary, write_table
from app.experiment.experiment_runner import (
    ExperimentSpec, crossval, loglog_slopes, run_experiment, scaling_sizes, sim_config,
    time_methods, worker_pool,
)
from app.nngp.nngp_kernel import ACTIVATIONS, NNGPConfig, induced_cov, nearfield_form_check
from app.simulate.simulate_data import (
    gaussian_mixture_1d, nonstat_2d, sample_gp_1d, sample_probe_1d, write_simulation,
)
from app.spatial.spatial_data import CsvSchema, load_csv, load_grid_csv, min_max_normalize

logger = logging.getLogger("app.cli")

GENERATORS = ("gp1d", "nonstat2d", "mixture", "probe")
# crossval 未指定方法时的默认方法
CROSSVAL_METHODS = ("deepkriging", "kriging-mle")


def _split(text: str):
    return tuple(c.strip() for c in (text or "").split(",") if c.strip())


def _parse_sets(pairs):
    flags = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set 的取值必须为 key=value，当前为 {pair}")
        key, value = pair.split("=", 1)
        flags[key.strip()] = value.strip()
    return flags


def _run_config(ctx: click.Context, preset: str = None, experiment: str = None, **flags):
    """合并全局选项与子命令选项并校验"""
    merged = dict(ctx.obj["flags"])
    merged.update({k: v for k, v in flags.items() if v is not None})
    config = parse_config(ctx.obj["config_path"], merged, preset)
    return check_config(config, experiment)


def _domain(config):
    domain = config.domain()
    return domain if domain == "auto" else np.asarray(domain, dtype=np.float64)


def schema_options(response: bool = True):
    """CSV 列角色选项"""
    def decorator(func):
        func = click.option("--covars", default="", help="协变量列，逗号分隔")(func)
        if response:
            func = click.option("--response", default="z", show_default=True, help="观测列")(func)
        func = click.option("--coords", default="s1", show_default=True, help="坐标列，逗号分隔")(func)
        func = click.option("--input", "input_path", required=True,
                            type=click.Path(dir_okay=False), help="输入 CSV")(func)
        return func
    return decorator


@click.group()
@click.version_option(get_version(), prog_name="deepkriging")
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              help="key = value 配置文件")
@click.option("--set", "sets", multiple=True, metavar="KEY=VALUE", help="覆盖任意配置键")
@click.option("--seed", type=int, help="主随机种子")
@click.option("--workers", type=int, help="工作进程数，0 表示全部 CPU 核")
@click.option("--output", type=click.Path(file_okay=False), help="输出目录")
@click.option("--epochs", type=int, help="训练轮数")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]),
              help="日志级别")
@click.option("-v", "--verbose", is_flag=True, default=None, help="显示进度条")
@click.pass_context
def cli(ctx, config_path, sets, seed, workers, output, epochs, log_level, verbose):
    """DeepKriging 空间预测工具箱"""
    flags = _parse_sets(sets)
    flags.update({k: v for k, v in {
        "run.seed": seed, "run.workers": workers, "run.output": output, "net.epochs": epochs,
        "run.log_level": log_level, "run.verbose": verbose,
    }.items() if v is not None})
    ctx.obj = {"config_path": config_path, "flags": flags}
    setup_logger(log_level or "INFO")


@cli.command()
@click.argument("generator", type=click.Choice(GENERATORS))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="输出 CSV")
@click.option("--n", type=int, help="样本数")
@click.pass_context
def simulate(ctx, generator, out, n):
    """生成模拟数据（同名 .json 记录设置）"""
    config = _run_config(ctx, **{"sim.n": n})
    sim = sim_config(config, config["run.seed"])
    if generator == "gp1d":
        data = sample_gp_1d(sim)
    elif generator == "nonstat2d":
        data, sim = nonstat_2d(config["sim.side"]), {"side": config["sim.side"]}
    elif generator == "mixture":
        data = gaussian_mixture_1d(sim)
    else:
        data = sample_probe_1d(sim)
    echo_config(config, Path(out).parent)
    write_simulation(out, data, sim, generator)
    click.echo(f"✓ 已生成 {data.n} 行: {out}")


@cli.command("embed")
@schema_options(response=False)
@click.option("--levels", help="层数或 auto")
@click.option("--kernel", type=click.Choice(KERNELS), help="核函数")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="输出 CSV")
@click.pass_context
def embed_command(ctx, input_path, coords, covars, levels, kernel, out):
    """计算坐标的多分辨率基函数嵌入"""
    config = _run_config(ctx, **{"basis.levels": levels, "basis.kernel": kernel})
    locations, _ = load_grid_csv(input_path, _split(coords))
    system = build_basis_system(locations, config.int_or_auto("basis.levels"),
                                config["basis.kernel"], _domain(config))
    embedding = embed(locations, system)
    echo_config(config, Path(out).parent)
    save_embedding_csv(out, embedding)
    click.echo(f"✓ H={system.levels}, K={embedding.k_original}, 剪枝后 K'={embedding.width}: {out}")


@cli.command()
@schema_options()
@click.option("--task", type=click.Choice(["regression", "classification"]), default="regression",
              show_default=True)
@click.option("--threshold", type=float, help="分类阈值（观测值 > 阈值记为 1）")
@click.option("--features", type=click.Choice(FEATURES), default="basis", show_default=True,
              help="basis 为 DeepKriging，其余为基线 DNN")
@click.option("--model-dir", required=True, type=click.Path(file_okay=False), help="模型输出目录")
@click.pass_context
def train(ctx, input_path, coords, response, covars, task, threshold, features, model_dir):
    """训练 DeepKriging 并保存模型"""
    config = _run_config(ctx, **{"pm25.threshold": threshold})
    data = load_csv(input_path, CsvSchema.from_flags(coords, response, covars))
    if task == "classification":
        model = DeepKriging(task, 2, config.deepkriging_config(), features)
        history = model.fit(data, classify_threshold(data.responses, config["pm25.threshold"]))
    else:
        model = DeepKriging(task, 1, config.deepkriging_config(), features)
        history = model.fit(data)
    model.save(model_dir)
    echo_config(config, model_dir)
    click.echo(f"✓ 训练完成, 最终损失 {history.final_loss:.6g}, 模型: {model_dir}")


@cli.command()
@click.option("--model-dir", required=True, type=click.Path(file_okay=False))
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--coords", default="s1", show_default=True)
@click.option("--covars", default="")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def predict(model_dir, input_path, coords, covars, out):
    """用已保存的模型预测"""
    model = DeepKriging.load(model_dir)
    coord_names = _split(coords)
    locations, covariates = load_grid_csv(input_path, coord_names, _split(covars))
    frame = pd.DataFrame(locations, columns=list(coord_names))
    prediction = model.predict(locations, covariates)
    if model.task == "regression":
        frame["prediction"] = prediction
    else:
        for k in range(prediction.shape[1]):
            frame[f"p_{k}"] = prediction[:, k]
    write_table(frame.to_dict("records"), out)
    click.echo(f"✓ 已预测 {len(frame)} 个位置: {out}")


@cli.command("crossval")
@schema_options()
@click.option("--methods", help="方法列表，逗号分隔")
@click.option("--folds", type=int, help="折数")
@click.option("--replicates", type=int, help="重复划分次数")
@click.pass_context
def crossval_command(ctx, input_path, coords, response, covars, methods, folds, replicates):
    """k 折交叉验证"""
    config = _run_config(ctx, **{"run.methods": methods, "cv.folds": folds,
                                 "run.replicates": replicates})
    data = load_csv(input_path, CsvSchema.from_flags(coords, response, covars))
    chosen = _split(config["run.methods"]) or CROSSVAL_METHODS
    unknown = [m for m in chosen if m not in METHODS]
    if unknown:
        raise ConfigError(f"未知的方法: {', '.join(unknown)}")
    seeds = [config["run.seed"] + r for r in range(config["run.replicates"])]
    output = Path(config["run.output"]) / "crossval"
    echo_config(config, output)
    with worker_pool(config.workers) as map_fn:
        rows = crossval(config, data, chosen, seeds, map_fn)
    frame = write_table(rows, output / "crossval_replicates.csv")
    summary = write_summary(frame, output / "crossval_summary.csv")
    _echo_summary(summary)


def _echo_summary(summary: pd.DataFrame):
    shown = summary[summary["split"] != "fit"]
    for row in shown.itertuples(index=False):
        click.echo(f"  {row.method:<22} {row.split:<6} {row.metric:<14} "
                   f"{row.mean:.6g} ± {row.sd:.3g}")


@cli.command()
@schema_options()
@click.option("--at", "at_path", type=click.Path(dir_okay=False),
              help="预测位置 CSV（默认为训练位置）")
@click.option("--ensemble", type=int, help="集成成员数")
@click.option("--cuts", help="切分点个数或 auto")
@click.option("--query", type=click.Choice(["pdf", "cdf", "quantile"]), help="查询某个位置")
@click.option("--index", type=int, default=0, show_default=True, help="查询的位置下标")
@click.option("--value", type=float, help="查询值（quantile 时为分位水平）")
@click.pass_context
def density(ctx, input_path, coords, response, covars, at_path, ensemble, cuts, query, index, value):
    """DDSP 预测密度与分位数表"""
    config = _run_config(ctx, **{"ddsp.ensemble": ensemble, "ddsp.cuts": cuts})
    data = load_csv(input_path, CsvSchema.from_flags(coords, response, covars))
    if at_path:
        locations, covariates = load_grid_csv(at_path, _split(coords), _split(covars))
    else:
        locations, covariates = data.locations, data.covariates
    n_cuts = config.int_or_auto("ddsp.cuts")
    output = Path(config["run.output"]) / "density"
    echo_config(config, output)
    with worker_pool(config.workers) as map_fn:
        estimate = ensemble_density(data, locations, covariates,
                                    ensemble_size=config["ddsp.ensemble"],
                                    n_cuts=None if n_cuts == "auto" else n_cuts,
                                    config=config.deepkriging_config(),
                                    seed=config["run.seed"], map_fn=map_fn)
    table = estimate.quantile_table(DEFAULT_LEVELS)
    frame = pd.DataFrame(locations, columns=list(_split(coords)))
    for k, level in enumerate(DEFAULT_LEVELS):
        frame[f"q{int(round(level * 100)):02d}"] = table[:, k]
    write_table(frame.to_dict("records"), output / "density_quantiles.csv")
    grid, pdfs = estimate.pdf_grid(config["ddsp.pdf_points"])
    emit_plot_data({str(i): (grid, pdfs[i]) for i in range(estimate.n_locations)},
                   "density", output / "density_pdf.csv")
    click.echo(f"✓ I={estimate.ensemble_size}, 位置 {estimate.n_locations} 个, 输出目录 {output}")
    if query:
        if value is None:
            raise ConfigError("--query 需要同时给出 --value")
        click.echo(f"  {query}({value}) @ {index} = {density_query(estimate, index, query, value)[0]:.6g}")


@cli.command()
@click.option("--input", "input_path", type=click.Path(dir_okay=False),
              help="一维数据 CSV（默认使用模拟的探针设计）")
@click.option("--coords", default="s1", show_default=True)
@click.option("--response", default="z", show_default=True)
@click.option("--method", type=click.Choice(PROBE_METHODS), default="kriging", show_default=True)
@click.option("--index", type=int, help="被替换观测的下标")
@click.option("--dropped", type=int, help="被删除观测的下标")
@click.option("--values", "n_values", type=int, help="探针值个数")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="输出曲线 CSV")
@click.pass_context
def probe(ctx, input_path, coords, response, method, index, dropped, n_values, out):
    """非线性探针：某个观测值变化时另一位置预测的响应曲线"""
    config = _run_config(ctx, **{"probe.index": index, "probe.dropped": dropped,
                                 "probe.values": n_values})
    if input_path:
        data = load_csv(input_path, CsvSchema.from_flags(coords, response))
    else:
        data = sample_probe_1d(sim_config(config, config["run.seed"], n=config["probe.n"]))
    values = np.linspace(data.responses.min(), data.responses.max(), config["probe.values"])
    if method == "kriging":
        model = fit_mle(data, config["kriging.family"], max_iter=config["kriging.max_iter"]).model
        result = nonlinearity_probe(data, config["probe.index"], config["probe.dropped"], values,
                                    method, model=model)
    else:
        dk_config = config.deepkriging_config(epochs=config["probe.epochs"])
        with worker_pool(config.workers) as map_fn:
            result = nonlinearity_probe(data, config["probe.index"], config["probe.dropped"], values,
                                        method, config=dk_config, map_fn=map_fn)
    echo_config(config, Path(out).parent)
    emit_plot_data({result.method: (result.values, result.predictions)}, "curve", out)
    click.echo(f"✓ {method} 仿射残差 {result.score:.3e}: {out}")


@cli.command("nngp-gram")
@schema_options(response=False)
@click.option("--levels", help="基函数层数或 auto")
@click.option("--depth", type=int, default=1, show_default=True, help="基础项之后的层数 + 1")
@click.option("--activation", type=click.Choice(ACTIVATIONS), default="relu", show_default=True)
@click.option("--sigma-w2", type=float, default=1.0, show_default=True)
@click.option("--sigma-b2", type=float, default=0.0, show_default=True)
@click.option("--nearfield", is_flag=True, help="一维输入时做近场形式检查")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="输出 Gram 矩阵 CSV")
@click.pass_context
def nngp_gram(ctx, input_path, coords, covars, levels, depth, activation, sigma_w2, sigma_b2,
              nearfield, out):
    """无限宽网络诱导的协方差 Gram 矩阵"""
    config = _run_config(ctx, **{"basis.levels": levels})
    locations, covariates = load_grid_csv(input_path, _split(coords), _split(covars))
    system = build_basis_system(locations, config.int_or_auto("basis.levels"),
                                config["basis.kernel"], _domain(config))
    scaled, _ = min_max_normalize(covariates)
    features = concat_features(scaled, embed(locations, system))
    cfg = NNGPConfig(sigma_b2=sigma_b2, sigma_w2=sigma_w2, depth=depth, activation=activation)
    gram = induced_cov(features, cfg)
    echo_config(config, Path(out).parent)
    write_table(pd.DataFrame(gram, columns=[f"c_{j}" for j in range(gram.shape[1])]).to_dict("records"), out)
    click.echo(f"✓ N={gram.shape[0]}, 最小特征值 {np.linalg.eigvalsh(gram).min():.3e}: {out}")
    if nearfield:
        if locations.shape[1] != 1:
            raise ConfigError("近场检查只支持一维坐标")
        order = np.argsort(locations[:, 0])
        report = nearfield_form_check(locations[order, 0], features[order], cfg)
        status = "通过" if report.passed else "未通过"
        click.echo(f"  近场检查{status}: c={report.c:.4g}, 相对残差 {report.residual:.3e}, "
                   f"点对 {report.n_pairs} 个")


@cli.command()
@click.argument("name", type=click.Choice(EXPERIMENTS))
@click.option("--replicates", type=int, help="重复次数")
@click.option("--methods", help="方法列表，逗号分隔")
@click.pass_context
def experiment(ctx, name, replicates, methods):
    """复现一个实验（预设位于 resources/experiments）"""
    config = _run_config(ctx, preset=name, experiment=name,
                         **{"run.replicates": replicates, "run.methods": methods})
    spec = ExperimentSpec.from_config(name, config)
    setup_logger(config["run.log_level"], spec.output / "run.log")
    result = run_experiment(spec)
    if "summary" in result.tables:
        _echo_summary(result.tables["summary"])
    click.echo(f"✓ 实验 {name} 完成, 输出目录 {spec.output}")


@cli.command()
@click.option("--sizes", help="样本量列表，逗号分隔")
@click.option("--methods", help="方法列表，逗号分隔")
@click.option("--out", type=click.Path(dir_okay=False), help="输出 CSV")
@click.pass_context
def bench(ctx, sizes, methods, out):
    """在探针设计上计时各方法的拟合"""
    config = _run_config(ctx, preset="scaling", experiment="scaling",
                         **{"scaling.sizes": sizes, "run.methods": methods})
    rows = time_methods(config, scaling_sizes(config), config.methods("scaling"), config["run.seed"])
    frame = pd.DataFrame(rows)
    for row in frame.itertuples(index=False):
        click.echo(f"  N={row.n:<7} {row.method:<14} {row.seconds:.3f}s")
    for row in loglog_slopes(frame).itertuples(index=False):
        click.echo(f"  {row.method:<14} log-log 斜率 {row.slope:.3f}")
    if out:
        echo_config(config, Path(out).parent)
        write_table(rows, out)


def main(argv=None) -> int:
    """运行命令行并把库异常映射为退出码"""
    try:
        cli.main(args=argv, prog_name="deepkriging", standalone_mode=False)
    except click.exceptions.Abort:
        print("\n用户中断程序")
        return EXIT_OK
    except click.ClickException as e:
        e.show()
        return EXIT_CONFIG
    except DeepKrigingError as e:
        logger.error(f"{type(e).__name__}: {e}")
        click.echo(f"✗ {e}", err=True)
        return e.exit_code
    return EXIT_OK


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n用户中断程序")
        sys.exit(0)
    except Exception as e:
        print(f"程序执行出错: {e}")
        sys.exit(1)
