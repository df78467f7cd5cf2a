import shutil
import subprocess
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

WORKSPACE = Path(__file__).resolve().parents[2]
ARTIFACTS = ("libshardsim_py.so", "libshardsim_py.dylib", "shardsim_py.dll")


class CargoBuild(build_ext):
    def run(self):
        subprocess.run(
            ["cargo", "build", "--release", "-p", "shardsim-py"],
            cwd=WORKSPACE,
            check=True,
        )
        release = WORKSPACE / "target" / "release"
        built = next((release / n for n in ARTIFACTS if (release / n).exists()), None)
        if built is None:
            raise FileNotFoundError(f"no built extension under {release}")
        target = Path(self.get_ext_fullpath("shardsim_py"))
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(built, target)


setup(
    name="shardsim-py",
    version="0.1.0",
    description="Python bindings for the shardsim scheduling simulator",
    ext_modules=[Extension("shardsim_py", sources=[])],
    cmdclass={"build_ext": CargoBuild},
    zip_safe=False,
)
