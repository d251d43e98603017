"""CMake-driven extension build; package metadata lives in pyproject.toml."""

import shutil
import subprocess
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source = Path(__file__).resolve().parent
        build = Path(self.build_temp).resolve()
        build.mkdir(parents=True, exist_ok=True)
        subprocess.run(
            [
                "cmake",
                "-S", str(source),
                "-B", str(build),
                "-DSKBUILD=ON",  # trims the build to the extension module
                "-DCMAKE_BUILD_TYPE=Release",
            ],
            check=True,
        )
        subprocess.run(["cmake", "--build", str(build), "--target", "_core"], check=True)
        # The module lands in the build tree's python package staging area.
        built = list((build / "python" / "descore").glob("_core*"))
        if not built:
            raise RuntimeError("cmake did not produce the _core extension")
        target = Path(self.get_ext_fullpath(ext.name)).resolve()
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(built[0], target)


setup(
    ext_modules=[CMakeExtension("descore._core")],
    cmdclass={"build_ext": CMakeBuild},
)
