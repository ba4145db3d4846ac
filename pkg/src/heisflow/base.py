"""Estimator parameter plumbing shared by the solver front-ends."""

import inspect

from .errors import ConfigError


class ParamsMixin:
    """get_params/set_params following the constructor-mirrors-params rule.

    Constructors of classes using this mixin must store every keyword
    argument verbatim on an attribute of the same name and defer all
    validation to fit().
    """

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return sorted(
            name
            for name, par in sig.parameters.items()
            if name != "self" and par.kind not in (par.VAR_POSITIONAL, par.VAR_KEYWORD)
        )

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = self._param_names()
        for key, val in params.items():
            if key not in valid:
                raise ConfigError(key, f"unknown parameter; valid names are {valid}")
            setattr(self, key, val)
        return self
