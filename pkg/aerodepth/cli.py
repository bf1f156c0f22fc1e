"""
Command-line entry point. Exit codes: 0 success, 1 usage or pipeline error,
2 internal error.
"""
import logging
import sys

import click

from . import __version__, create_app
from .errors import AerodepthError

logger = logging.getLogger('aerodepth')

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_INTERNAL_ERROR = 2


def _one_line(error) -> str:
    text = (error.format_message() if isinstance(error, click.ClickException) else str(error)).strip()
    return text.splitlines()[0] if text else type(error).__name__


class PipelineGroup(click.Group):
    """Group that maps every failure to a single diagnostic line and an exit code"""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            result = super().main(args=args, prog_name=prog_name, complete_var=complete_var,
                                  standalone_mode=False, **extra)
            code = result if isinstance(result, int) else EXIT_OK
        except click.ClickException as e:
            click.echo(f"Error: {_one_line(e)}", err=True)
            code = EXIT_USER_ERROR
        except click.Abort:
            click.echo("Aborted.", err=True)
            code = EXIT_USER_ERROR
        except AerodepthError as e:
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"Error: {_one_line(e)}", err=True)
            code = EXIT_USER_ERROR
        except Exception as e:
            logger.exception(f"Internal error: {e}")
            click.echo(f"Internal error: {type(e).__name__}: {_one_line(e)}", err=True)
            code = EXIT_INTERNAL_ERROR
        if standalone_mode:
            sys.exit(code)
        return code


@click.group(cls=PipelineGroup, context_settings={'help_option_names': ['-h', '--help']})
@click.option('--config', 'config_object', envvar='AERODEPTH_CONFIG', default='config.Config', show_default=True,
              help='Settings class to load.')
@click.version_option(__version__, prog_name='aerodepth')
@click.pass_context
def cli(ctx, config_object):
    """Joint depth and semantic segmentation for aerial image sequences."""
    ctx.obj = create_app(config_object)


def register_commands(group: click.Group):
    from .commands.evaluate import eval_cmd
    from .commands.generate import generate_cmd
    from .commands.predict import predict_cmd
    from .commands.reconstruct import reconstruct_cmd
    from .commands.report import report_cmd
    from .commands.train import train_cmd

    group.add_command(generate_cmd)
    group.add_command(train_cmd)
    group.add_command(eval_cmd)
    group.add_command(predict_cmd)
    group.add_command(reconstruct_cmd)
    group.add_command(report_cmd)


register_commands(cli)


def main(argv=None):
    return cli.main(args=argv, prog_name='aerodepth')
