from django.apps import AppConfig

from conf.settings import MVSD_TORCH_THREADS


class MvsdConfig(AppConfig):
    name = "mvsd"

    def ready(self):
        if MVSD_TORCH_THREADS:
            import torch

            torch.set_num_threads(MVSD_TORCH_THREADS)
