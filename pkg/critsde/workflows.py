import os

import nipype.pipeline.engine as pe          # pypeline engine
from nipype import logging

from critsde.config import ExperimentConfig, apply_dict_to_obj, flatten, parse_config
from critsde.interfaces import PlotScripts, interface_for, validate_objects
from critsde.storage import MANIFEST_NAME, load_manifest

wflogger = logging.getLogger("nipype.workflow")


class LabWorkflow(pe.Workflow):
    """ experiment node -> plot script node. The experiment writes its
    artifacts and manifest to out_dir; nipype's own working files go under
    base_dir.
    """
    def __init__(self, config=None, out_dir=None, *args, **kwargs):
        super(LabWorkflow, self).__init__(*args, **kwargs)
        self.out_dir = out_dir
        self.lab_config = config

    @property
    def lab_config(self):
        return self._lab_config
    @lab_config.setter
    def lab_config(self, value):
        self._lab_config = value
        if self._lab_config is not None:
            self.update_nodes_from_config()

    def update_nodes_from_config(self):
        apply_dict_to_obj(flatten(self.lab_config), self.experiment_node.inputs)
        if self.out_dir:
            self.experiment_node.inputs.out_dir = os.path.abspath(self.out_dir)

    def run(self, *args, **kwargs):
        self.connect_nodes()
        return super(LabWorkflow, self).run(*args, **kwargs)

    def write_graph(self, *args, **kwargs):
        self.connect_nodes()
        return super(LabWorkflow, self).write_graph(*args, **kwargs)

    def clear_nodes(self):
        all_nodes = self._get_all_nodes()
        if all_nodes is not None:
            self.remove_nodes(all_nodes)

    def connect_nodes(self):
        self.clear_nodes()
        self.connect([
            (self.experiment_node, self.plot_node, [("manifest_file", "manifest_file")]),
            ])

    """ self-inflating nodes """

    @property
    def experiment_node(self):
        if not getattr(self, "_experiment_node", None):
            if self.lab_config is None:
                raise ValueError("the experiment node needs a config")
            self._experiment_node = pe.Node(
                    name=self.lab_config.experiment.replace("-", "_"),
                    interface=interface_for(self.lab_config)(),
                    overwrite=True)
        return self._experiment_node
    @experiment_node.setter
    def experiment_node(self, val):
        self._experiment_node = val

    @property
    def plot_node(self):
        if not getattr(self, "_plot_node", None):
            self._plot_node = pe.Node(name="plot_scripts", interface=PlotScripts(),
                                      overwrite=True)
        return self._plot_node
    @plot_node.setter
    def plot_node(self, val):
        self._plot_node = val


def run(config, out_dir, base_dir=None, **overrides):
    """ validates config (a mapping or an ExperimentConfig), runs the
    experiment workflow and reads back the manifest.

    return: (status, manifest) with status 0 iff every check passed
    ConfigError propagates (the command line maps it to status 2).
    """
    if not isinstance(config, ExperimentConfig):
        config = parse_config(config, **overrides)
    validate_objects(config)
    out_dir = os.path.abspath(out_dir)
    if not os.path.exists(out_dir):
        os.makedirs(out_dir)
    base_dir = os.path.join(out_dir, "work") if base_dir is None else base_dir
    wk = LabWorkflow(name="critsde_" + config.experiment.replace("-", "_"),
                     config=config, out_dir=out_dir, base_dir=base_dir)
    if config.workers > 1:
        wflogger.info("running with %d processes", config.workers)
        wk.run(plugin="MultiProc", plugin_args={"n_procs": config.workers,
                                                "non_daemon": True})
    else:
        wflogger.info("running single process")
        wk.run()
    manifest = load_manifest(os.path.join(out_dir, MANIFEST_NAME))
    status = 0 if manifest.passed else 1
    if status:
        wflogger.warning("failing checks: %s", ", ".join(manifest.failing))
    return status, manifest
